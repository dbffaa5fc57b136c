//! Line-oriented text format for trained models.
//!
//! ```text
//! moet-model 1
//! experts <E>
//! classes <C>
//! features <F>
//! mode <soft|hard>
//! mean <F reals>
//! std <F reals>
//! gate <j> <F+1 reals, bias last>      (E lines, raw feature space)
//! tree <j>                             (E blocks, preorder)
//! split <feature> <threshold>
//! leaf <C reals>
//! end
//! ```
//!
//! Reals are written with 17 significant digits (`{:.16e}`) so every `f64`
//! round-trips exactly.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::ClassDistribution;
use crate::dtree::TreeNode;
use crate::error::{Error, Result};
use crate::gating::{GatingParams, Standardizer};
use crate::model::MoetModel;

pub const FORMAT_HEADER: &str = "moet-model 1";

pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| fmt_real(*v)).collect::<Vec<_>>().join(" ")
}

fn write_tree(out: &mut String, node: &TreeNode) {
    match node {
        TreeNode::Leaf(d) => {
            let _ = writeln!(out, "leaf {}", join(d.probs()));
        }
        TreeNode::Internal {
            feature,
            threshold,
            left,
            right,
        } => {
            let _ = writeln!(out, "split {feature} {}", fmt_real(*threshold));
            write_tree(out, left);
            write_tree(out, right);
        }
    }
}

pub fn model_to_string(model: &MoetModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{FORMAT_HEADER}");
    let _ = writeln!(out, "experts {}", model.num_experts());
    let _ = writeln!(out, "classes {}", model.num_classes());
    let _ = writeln!(out, "features {}", model.num_features());
    let _ = writeln!(out, "mode {}", model.mode().as_str());
    let _ = writeln!(out, "mean {}", join(&model.standardization().mean));
    let _ = writeln!(out, "std {}", join(&model.standardization().std));
    for (j, c) in model.gate().coefficients().iter().enumerate() {
        let _ = writeln!(out, "gate {j} {}", join(c));
    }
    for (j, t) in model.experts().iter().enumerate() {
        let _ = writeln!(out, "tree {j}");
        write_tree(&mut out, t);
    }
    out.push_str("end\n");
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(&'a str, Vec<&'a str>)> {
        match self.inner.next() {
            Some((i, line)) => {
                self.last = i + 1;
                let mut parts = line.split_whitespace();
                let key = parts.next().unwrap_or("");
                Ok((key, parts.collect()))
            }
            None => Err(self.err("unexpected end of file")),
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            line: self.last,
            msg: msg.into(),
        }
    }

    fn keyed(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let (k, rest) = self.next()?;
        if k != key {
            return Err(self.err(format!("expected {key:?}, found {k:?}")));
        }
        Ok(rest)
    }

    fn count(&mut self, key: &str) -> Result<usize> {
        let rest = self.keyed(key)?;
        match rest.as_slice() {
            [v] => v.parse().map_err(|_| self.err(format!("bad {key} value {v:?}"))),
            _ => Err(self.err(format!("{key} takes one value"))),
        }
    }

    fn reals(&self, parts: &[&str], expected: usize) -> Result<Vec<f64>> {
        if parts.len() != expected {
            return Err(self.err(format!("expected {expected} values, found {}", parts.len())));
        }
        parts
            .iter()
            .map(|p| {
                p.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| self.err(format!("bad real {p:?}")))
            })
            .collect()
    }

    fn tree(&mut self, c: usize, f: usize, depth: usize) -> Result<TreeNode> {
        if depth > 512 {
            return Err(self.err("tree nesting too deep"));
        }
        let (k, rest) = self.next()?;
        match k {
            "leaf" => {
                let probs = self.reals(&rest, c)?;
                let d = ClassDistribution::new(probs).map_err(|e| self.err(e.to_string()))?;
                Ok(TreeNode::Leaf(d))
            }
            "split" => {
                let [feat, thr] = rest.as_slice() else {
                    return Err(self.err("split takes a feature and a threshold"));
                };
                let feature: usize = feat
                    .parse()
                    .ok()
                    .filter(|&v| v < f)
                    .ok_or_else(|| self.err(format!("bad feature index {feat:?}")))?;
                let threshold = self.reals(&[thr], 1)?[0];
                let left = Box::new(self.tree(c, f, depth + 1)?);
                let right = Box::new(self.tree(c, f, depth + 1)?);
                Ok(TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                })
            }
            other => Err(self.err(format!("expected a tree node, found {other:?}"))),
        }
    }
}

pub fn model_from_str(text: &str) -> Result<MoetModel> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last: 0,
    };
    let (k, rest) = lines.next()?;
    let header = std::iter::once(k).chain(rest.iter().copied()).collect::<Vec<_>>().join(" ");
    if header != FORMAT_HEADER {
        return Err(Error::FormatVersionMismatch(header));
    }
    let e = lines.count("experts")?;
    let c = lines.count("classes")?;
    let f = lines.count("features")?;
    if e == 0 || c == 0 {
        return Err(lines.err("experts and classes must be positive"));
    }
    let mode = match lines.keyed("mode")?.as_slice() {
        [m] => m.parse().map_err(|_| lines.err(format!("bad mode {m:?}")))?,
        _ => return Err(lines.err("mode takes one value")),
    };
    let mean_parts = lines.keyed("mean")?;
    let mean = lines.reals(&mean_parts, f)?;
    let std_parts = lines.keyed("std")?;
    let std = lines.reals(&std_parts, f)?;
    let mut coefficients = Vec::with_capacity(e);
    for j in 0..e {
        let rest = lines.keyed("gate")?;
        if rest.first() != Some(&j.to_string().as_str()) {
            return Err(lines.err(format!("expected gate {j}")));
        }
        coefficients.push(lines.reals(&rest[1..], f + 1)?);
    }
    let mut experts = Vec::with_capacity(e);
    for j in 0..e {
        let rest = lines.keyed("tree")?;
        if rest.as_slice() != [j.to_string().as_str()] {
            return Err(lines.err(format!("expected tree {j}")));
        }
        experts.push(lines.tree(c, f, 0)?);
    }
    lines.keyed("end")?;
    let gate = GatingParams::new(coefficients).map_err(|e| lines.err(e.to_string()))?;
    MoetModel::new(gate, experts, Standardizer { mean, std }, c, mode)
}

pub fn save_model(model: &MoetModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model_to_string(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MoetModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::InferenceMode;

    fn sample() -> MoetModel {
        let leaf = |p: Vec<f64>| TreeNode::leaf(ClassDistribution::new(p).unwrap());
        let tree = TreeNode::Internal {
            feature: 1,
            threshold: 0.123_456_789_012_345_67,
            left: Box::new(leaf(vec![0.25, 0.75])),
            right: Box::new(leaf(vec![1.0 / 3.0, 2.0 / 3.0])),
        };
        MoetModel::new(
            GatingParams::new(vec![vec![1.06, 1.11, -4.0], vec![0.0, 0.0, 0.0]]).unwrap(),
            vec![tree, leaf(vec![0.5, 0.5])],
            Standardizer {
                mean: vec![2.0, 2.0],
                std: vec![1.4142135623730951, 1.4142135623730951],
            },
            2,
            InferenceMode::Hard,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let m = sample();
        let text = model_to_string(&m);
        assert_eq!(model_from_str(&text).unwrap(), m);
        assert!(text.contains("split 1 1.2345678901234566e-1"));
    }

    #[test]
    fn golden_layout() {
        let expected = "\
moet-model 1
experts 2
classes 2
features 2
mode hard
mean 2.0000000000000000e0 2.0000000000000000e0
std 1.4142135623730951e0 1.4142135623730951e0
gate 0 1.0600000000000001e0 1.1100000000000001e0 -4.0000000000000000e0
gate 1 0.0000000000000000e0 0.0000000000000000e0 0.0000000000000000e0
tree 0
split 1 1.2345678901234566e-1
leaf 2.5000000000000000e-1 7.5000000000000000e-1
leaf 3.3333333333333331e-1 6.6666666666666663e-1
tree 1
leaf 5.0000000000000000e-1 5.0000000000000000e-1
end
";
        assert_eq!(model_to_string(&sample()), expected);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let text = model_to_string(&sample());
        for cut in [10, text.len() / 2, text.len() - 5] {
            assert!(model_from_str(&text[..cut]).is_err());
        }
    }

    #[test]
    fn wrong_version_is_reported() {
        let text = model_to_string(&sample()).replacen("moet-model 1", "moet-model 2", 1);
        assert!(matches!(model_from_str(&text), Err(Error::FormatVersionMismatch(_))));
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.moet");
        save_model(&sample(), &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(loaded, sample());
        assert!(matches!(load_model(dir.path().join("missing")), Err(Error::Io { .. })));
    }
}
