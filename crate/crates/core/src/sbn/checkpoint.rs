//! Flat text checkpoints: for each tensor a `name rows cols` line followed by one
//! line of space-separated values.

use super::model::{InferenceNet, SbnModel};
use super::net::Affine;
use crate::error::{Error, Result};

fn push(out: &mut String, name: &str, rows: usize, cols: usize, values: &[f64]) {
    out.push_str(&format!("{name} {rows} {cols}\n"));
    let vals: Vec<String> = values.iter().map(|v| format!("{v:e}")).collect();
    out.push_str(&vals.join(" "));
    out.push('\n');
}

pub fn save(model: &SbnModel, qnet: &InferenceNet) -> String {
    let mut out = String::new();
    out.push_str(&format!("obs {} {}\n", 1, model.obs_width));
    for (l, a) in model.gen.iter().enumerate() {
        push(&mut out, &format!("gen{l}.weight"), a.rows, a.cols, &a.weight);
        push(&mut out, &format!("gen{l}.bias"), a.rows, 1, &a.bias);
    }
    push(&mut out, "prior", model.prior.len(), 1, &model.prior);
    for (l, a) in qnet.layers.iter().enumerate() {
        push(&mut out, &format!("q{l}.weight"), a.rows, a.cols, &a.weight);
        push(&mut out, &format!("q{l}.bias"), a.rows, 1, &a.bias);
    }
    out
}

struct Reader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl Reader<'_> {
    fn tensor(&mut self, name: &str) -> Result<(usize, usize, Vec<f64>)> {
        let (n, header) = self.lines.next().ok_or_else(|| Error::Parse { line: 0, message: format!("missing {name}") })?;
        let err = |message: String| Error::Parse { line: n + 1, message };
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 || parts[0] != name {
            return Err(err(format!("expected header for {name}, found {header:?}")));
        }
        let rows: usize = parts[1].parse().map_err(|_| err(format!("bad row count {:?}", parts[1])))?;
        let cols: usize = parts[2].parse().map_err(|_| err(format!("bad column count {:?}", parts[2])))?;
        if name == "obs" {
            return Ok((rows, cols, Vec::new()));
        }
        let (m, body) = self.lines.next().ok_or_else(|| err(format!("missing values for {name}")))?;
        let values = body
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| Error::Parse { line: m + 1, message: format!("bad value {t:?}") }))
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != rows * cols {
            return Err(Error::Parse { line: m + 1, message: format!("{name}: expected {} values", rows * cols) });
        }
        Ok((rows, cols, values))
    }

    fn affine(&mut self, prefix: &str) -> Result<Affine> {
        let (rows, cols, weight) = self.tensor(&format!("{prefix}.weight"))?;
        let (brows, _, bias) = self.tensor(&format!("{prefix}.bias"))?;
        if brows != rows {
            return Err(Error::DimensionMismatch { expected: rows, found: brows });
        }
        Ok(Affine { rows, cols, weight, bias })
    }
}

/// Parses a checkpoint written by [`save`].
pub fn load(text: &str) -> Result<(SbnModel, InferenceNet)> {
    let layer_count = text.lines().filter(|l| l.starts_with("gen") && l.contains(".weight")).count();
    let mut r = Reader { lines: text.lines().enumerate() };
    let (_, obs_width, _) = r.tensor("obs")?;
    let gen = (0..layer_count).map(|l| r.affine(&format!("gen{l}"))).collect::<Result<Vec<_>>>()?;
    let (_, _, prior) = r.tensor("prior")?;
    let layers = (0..layer_count).map(|l| r.affine(&format!("q{l}"))).collect::<Result<Vec<_>>>()?;
    let widths: Vec<usize> = gen.iter().map(|a| a.cols).collect();
    let model = SbnModel { obs_width, widths, gen, prior };
    let qnet = InferenceNet { layers };
    let consistent = model.gen[0].rows == obs_width
        && (1..layer_count).all(|l| model.gen[l].rows == model.widths[l - 1])
        && model.prior.len() == *model.widths.last().unwrap_or(&0)
        && qnet.layers.iter().zip(&model.widths).all(|(a, &w)| a.rows == w);
    if layer_count == 0 || !consistent {
        return Err(Error::Parse { line: 0, message: "inconsistent tensor shapes".into() });
    }
    Ok((model, qnet))
}
