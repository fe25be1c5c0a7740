use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_training_data, Scorer};
use crate::error::{Error, Result};
use crate::util::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Features tried per split; `None` means ⌊√p⌋.
    pub max_features: Option<usize>,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_features: None,
            max_depth: None,
            min_samples_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Class frequencies (clean, defective) of the training rows reaching it.
    Leaf { p_clean: f64, p_defective: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub seed: u64,
    /// Root first.
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
                Node::Leaf { p_defective, .. } => return p_defective,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
                Node::Leaf { .. } => 0,
            }
        }
        go(&self.nodes, 0)
    }
}

/// Bagged Gini trees; the score is the mean leaf probability of the
/// defective class.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub n_features: usize,
    pub trees: Vec<Tree>,
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [u8],
    config: ForestConfig,
    max_features: usize,
    nodes: Vec<Node>,
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

impl Builder<'_> {
    fn leaf(&mut self, rows: &[usize]) -> usize {
        let pos = rows.iter().filter(|&&r| self.y[r] == 1).count();
        let p = pos as f64 / rows.len() as f64;
        self.nodes.push(Node::Leaf {
            p_clean: 1.0 - p,
            p_defective: p,
        });
        self.nodes.len() - 1
    }

    /// Best (feature, threshold, weighted child impurity) over one feature,
    /// or `None` if the feature is constant on `rows` or no split respects
    /// the leaf-size limit. The second value reports constancy.
    fn best_on_feature(&self, rows: &[usize], f: usize) -> (Option<(f64, f64)>, bool) {
        let mut sorted: Vec<(f64, u8)> = rows.iter().map(|&r| (self.x[r][f], self.y[r])).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        if sorted[0].0 == sorted[sorted.len() - 1].0 {
            return (None, true);
        }
        let n = sorted.len();
        let total_pos = sorted.iter().filter(|s| s.1 == 1).count();
        let min_leaf = self.config.min_samples_leaf.max(1);
        let mut left_pos = 0;
        let mut best: Option<(f64, f64)> = None;
        for i in 0..n - 1 {
            left_pos += usize::from(sorted[i].1 == 1);
            let (a, b) = (sorted[i].0, sorted[i + 1].0);
            if a == b {
                continue;
            }
            let nl = i + 1;
            let nr = n - nl;
            if nl < min_leaf || nr < min_leaf {
                continue;
            }
            let imp = (nl as f64 * gini(left_pos, nl) + nr as f64 * gini(total_pos - left_pos, nr)) / n as f64;
            if best.is_none_or(|(_, bi)| imp < bi) {
                let mut t = a / 2.0 + b / 2.0;
                if t >= b || t < a {
                    t = a;
                }
                best = Some((t, imp));
            }
        }
        (best, false)
    }

    fn build(&mut self, rows: &[usize], depth: usize, rng: &mut impl Rng) -> usize {
        let pos = rows.iter().filter(|&&r| self.y[r] == 1).count();
        let depth_capped = self.config.max_depth.is_some_and(|d| depth >= d);
        if pos == 0 || pos == rows.len() || depth_capped || rows.len() < 2 * self.config.min_samples_leaf.max(1) {
            return self.leaf(rows);
        }
        let mut features: Vec<usize> = (0..self.x[0].len()).collect();
        features.shuffle(rng);
        let mut tried = 0;
        let mut best: Option<(usize, f64, f64)> = None;
        for f in features {
            if tried >= self.max_features {
                break;
            }
            let (cand, constant) = self.best_on_feature(rows, f);
            if constant {
                continue;
            }
            tried += 1;
            if let Some((t, imp)) = cand {
                if best.is_none_or(|(_, _, bi)| imp < bi) {
                    best = Some((f, t, imp));
                }
            }
        }
        let Some((feature, threshold, _)) = best else {
            return self.leaf(rows);
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| self.x[i][feature] <= threshold);
        let me = self.nodes.len();
        self.nodes.push(Node::Leaf {
            p_clean: 0.0,
            p_defective: 0.0,
        });
        let left = self.build(&l, depth + 1, rng);
        let right = self.build(&r, depth + 1, rng);
        self.nodes[me] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        me
    }
}

pub fn train_forest(x: &[Vec<f64>], y: &[u8], config: &ForestConfig, seed: u64) -> Result<ForestModel> {
    let p = check_training_data(x, y)?;
    if config.n_trees == 0 {
        return Err(Error::InvalidArgument("forest needs at least one tree".into()));
    }
    let max_features = config
        .max_features
        .unwrap_or_else(|| (p as f64).sqrt().floor() as usize)
        .clamp(1, p);
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let tree_seed = seed.wrapping_add(t as u64);
            let mut rng = rng_for(tree_seed, 0);
            let n = x.len();
            let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let mut b = Builder {
                x,
                y,
                config: *config,
                max_features,
                nodes: Vec::new(),
            };
            b.build(&rows, 0, &mut rng);
            Tree {
                seed: tree_seed,
                nodes: b.nodes,
            }
        })
        .collect();
    Ok(ForestModel { n_features: p, trees })
}

const HEADER: &str = "simcom-forest v1";

impl ForestModel {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::dim(self.n_features, x.len(), "forest input"));
        }
        if self.trees.is_empty() {
            return Err(Error::InvalidArgument("forest has no trees".into()));
        }
        Ok(self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64)
    }

    /// Text form: a header, then per tree a `tree <seed> <n>` line followed by
    /// `S feature threshold left right` or `L p_clean p_defective` lines.
    pub fn to_text(&self) -> String {
        let mut s = format!("{HEADER}\nfeatures {}\ntrees {}\n", self.n_features, self.trees.len());
        for t in &self.trees {
            let _ = writeln!(s, "tree {} {}", t.seed, t.nodes.len());
            for n in &t.nodes {
                let _ = match n {
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => writeln!(s, "S {feature} {threshold} {left} {right}"),
                    Node::Leaf { p_clean, p_defective } => writeln!(s, "L {p_clean} {p_defective}"),
                };
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<ForestModel> {
        let bad = |why: String| Error::format("forest", why);
        let mut lines = text.lines().enumerate();
        let mut next = |what: &str| {
            lines
                .next()
                .map(|(i, l)| (i + 1, l))
                .ok_or_else(|| bad(format!("missing {what}")))
        };
        let (_, h) = next("header")?;
        if h != HEADER {
            return Err(bad(format!("unsupported header {h:?}")));
        }
        fn field<T: std::str::FromStr>(tok: Option<&str>, line: usize) -> Result<T> {
            tok.and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::format("forest", format!("line {line}: bad field")))
        }
        let (ln, l) = next("feature count")?;
        let n_features: usize = field(l.strip_prefix("features "), ln)?;
        let (ln, l) = next("tree count")?;
        let n_trees: usize = field(l.strip_prefix("trees "), ln)?;
        let mut trees = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            let (ln, l) = next("tree header")?;
            let mut tok = l.split(' ');
            if tok.next() != Some("tree") {
                return Err(bad(format!("line {ln}: expected tree header")));
            }
            let seed: u64 = field(tok.next(), ln)?;
            let count: usize = field(tok.next(), ln)?;
            let mut nodes = Vec::with_capacity(count);
            for _ in 0..count {
                let (ln, l) = next("node")?;
                let mut tok = l.split(' ');
                let node = match tok.next() {
                    Some("S") => Node::Split {
                        feature: field(tok.next(), ln)?,
                        threshold: field(tok.next(), ln)?,
                        left: field(tok.next(), ln)?,
                        right: field(tok.next(), ln)?,
                    },
                    Some("L") => Node::Leaf {
                        p_clean: field(tok.next(), ln)?,
                        p_defective: field(tok.next(), ln)?,
                    },
                    _ => return Err(bad(format!("line {ln}: unknown node kind"))),
                };
                if let Node::Split { feature, left, right, .. } = node {
                    if feature >= n_features || left >= count || right >= count {
                        return Err(bad(format!("line {ln}: node reference out of range")));
                    }
                }
                nodes.push(node);
            }
            if nodes.is_empty() {
                return Err(bad("empty tree".into()));
            }
            trees.push(Tree { seed, nodes });
        }
        if trees.is_empty() {
            return Err(bad("no trees".into()));
        }
        Ok(ForestModel { n_features, trees })
    }
}

impl Scorer for ForestModel {
    fn score(&self, x: &[f64]) -> Result<f64> {
        self.predict(x)
    }
}
