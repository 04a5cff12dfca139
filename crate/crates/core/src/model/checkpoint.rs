//! Plain-text parameter checkpoints.
//!
//! ```text
//! # maj-hardness-lab checkpoint schema=1
//! d=3 k=2 ell=4 recursion=computed_tokens link=neg_cos
//! 0.25
//! -1.5
//! 0
//! ```
//!
//! Values are the unmasked weights in row-major order, written with Rust's
//! shortest round-trip formatting so a read-back is bit-exact.

use std::fmt::Write as _;

use super::{Link, ModelConfig, ModelError, RecursionMode, TransformerParams};

const HEADER: &str = "# maj-hardness-lab checkpoint schema=1";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: TransformerParams,
}

pub fn write_checkpoint(config: &ModelConfig, params: &TransformerParams) -> String {
    let mut out = String::new();
    writeln!(out, "{HEADER}").unwrap();
    writeln!(
        out,
        "d={} k={} ell={} recursion={} link={}",
        config.d(),
        config.k(),
        config.ell(),
        config.recursion.name(),
        config.link.name()
    )
    .unwrap();
    for v in params.to_flat(config) {
        writeln!(out, "{v}").unwrap();
    }
    out
}

fn bad(line: usize, msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint { line, msg: msg.into() }
}

pub fn read_checkpoint(text: &str) -> Result<Checkpoint, ModelError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, HEADER)) => {}
        Some((n, other)) => return Err(bad(n, format!("unexpected header {other:?}"))),
        None => return Err(bad(1, "empty checkpoint")),
    }
    let (n, shape) = lines.next().ok_or_else(|| bad(2, "missing shape line"))?;
    let (mut d, mut k, mut ell, mut recursion, mut link) = (None, None, None, None, None);
    for field in shape.split_whitespace() {
        let (key, value) = field.split_once('=').ok_or_else(|| bad(n, format!("malformed field {field:?}")))?;
        let int = || value.parse::<usize>().map_err(|e| bad(n, format!("{key}: {e}")));
        match key {
            "d" => d = Some(int()?),
            "k" => k = Some(int()?),
            "ell" => ell = Some(int()?),
            "recursion" => {
                recursion = Some(RecursionMode::from_name(value).ok_or_else(|| bad(n, format!("unknown recursion {value:?}")))?)
            }
            "link" => link = Some(Link::from_name(value).ok_or_else(|| bad(n, format!("unknown link {value:?}")))?),
            _ => return Err(bad(n, format!("unknown field {key:?}"))),
        }
    }
    let missing = |name: &str| bad(n, format!("missing {name}"));
    let config = ModelConfig::new(d.ok_or_else(|| missing("d"))?, k.ok_or_else(|| missing("k"))?)
        .map_err(|e| bad(n, e.to_string()))?
        .with_recursion(recursion.ok_or_else(|| missing("recursion"))?)
        .with_link(link.ok_or_else(|| missing("link"))?);
    if ell != Some(config.ell()) {
        return Err(bad(n, format!("ell must be d + k - 1 = {}", config.ell())));
    }
    let mut flat = Vec::with_capacity(config.num_params());
    for (n, line) in lines {
        if line.is_empty() {
            continue;
        }
        flat.push(line.parse::<f64>().map_err(|e| bad(n, e.to_string()))?);
    }
    let params = TransformerParams::from_flat(&config, &flat)?;
    Ok(Checkpoint { config, params })
}
