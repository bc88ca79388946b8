use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use super::{Dataset, GbtHyperparams, Node, Tree, TreeEnsemble};
use crate::error::{Error, Result};
use crate::sampling::SimRng;

/// Minimum hessian (row count, for squared loss) on each side of a split.
const MIN_CHILD_WEIGHT: f64 = 1.0;
const INACTIVE: u32 = u32::MAX;

fn soft_threshold(g: f64, alpha: f64) -> f64 {
    if g > alpha {
        g - alpha
    } else if g < -alpha {
        g + alpha
    } else {
        0.0
    }
}

fn score(g: f64, h: f64, hp: &GbtHyperparams) -> f64 {
    let t = soft_threshold(g, hp.reg_alpha);
    t * t / (h + hp.reg_lambda)
}

fn leaf_weight(g: f64, h: f64, hp: &GbtHyperparams) -> f64 {
    if h == 0.0 {
        return 0.0;
    }
    -soft_threshold(g, hp.reg_alpha) / (h + hp.reg_lambda)
}

/// Threshold `t` with `a < t ≤ b`.
pub(crate) fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m > a && m <= b {
        m
    } else {
        b
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

#[derive(Debug, Clone, Copy)]
struct Frontier {
    node: usize,
    g: f64,
    h: f64,
}

struct Builder<'a> {
    data: &'a Dataset,
    sorted: &'a [Vec<u32>],
    grad: &'a [f64],
    hp: &'a GbtHyperparams,
}

impl Builder<'_> {
    fn scan(
        &self,
        feature: usize,
        pos: &[u32],
        frontier: &[Frontier],
        parent: &[f64],
    ) -> Vec<Option<Candidate>> {
        let col = self.data.column(feature);
        let k = frontier.len();
        let mut gl = vec![0.0; k];
        let mut hl = vec![0.0; k];
        let mut last = vec![f64::NAN; k];
        let mut best: Vec<Option<Candidate>> = vec![None; k];
        for &r in &self.sorted[feature] {
            let r = r as usize;
            let node = pos[r];
            if node == INACTIVE {
                continue;
            }
            let n = node as usize;
            let v = col[r];
            if hl[n] > 0.0 && v != last[n] {
                let hr = frontier[n].h - hl[n];
                if hl[n] >= MIN_CHILD_WEIGHT && hr >= MIN_CHILD_WEIGHT {
                    let gr = frontier[n].g - gl[n];
                    let gain = score(gl[n], hl[n], self.hp) + score(gr, hr, self.hp) - parent[n];
                    if gain > self.hp.gamma && best[n].is_none_or(|b| gain > b.gain) {
                        best[n] = Some(Candidate {
                            feature,
                            threshold: midpoint(last[n], v),
                            gain,
                        });
                    }
                }
            }
            gl[n] += self.grad[r];
            hl[n] += 1.0;
            last[n] = v;
        }
        best
    }

    fn build(&self, features: &[usize], in_sample: &[bool]) -> Tree {
        let hp = self.hp;
        let n = self.data.n_rows();
        let mut pos: Vec<u32> = in_sample
            .iter()
            .map(|&s| if s { 0 } else { INACTIVE })
            .collect();
        let (g0, h0) = (0..n)
            .filter(|&i| in_sample[i])
            .fold((0.0, 0.0), |(g, h), i| (g + self.grad[i], h + 1.0));
        if h0 == 0.0 {
            return Tree::leaf(0.0);
        }
        let mut nodes = vec![Node::Leaf { weight: 0.0 }];
        let mut frontier = vec![Frontier {
            node: 0,
            g: g0,
            h: h0,
        }];

        for _ in 0..hp.max_depth {
            let parent: Vec<f64> = frontier.iter().map(|f| score(f.g, f.h, hp)).collect();
            let per_feature: Vec<Vec<Option<Candidate>>> = features
                .par_iter()
                .map(|&f| self.scan(f, &pos, &frontier, &parent))
                .collect();
            let mut chosen: Vec<Option<Candidate>> = vec![None; frontier.len()];
            for cands in &per_feature {
                for (slot, c) in chosen.iter_mut().zip(cands) {
                    if let Some(c) = c {
                        if slot.is_none_or(|s| c.gain > s.gain) {
                            *slot = Some(*c);
                        }
                    }
                }
            }

            // child frontier indices for each split node
            let mut next = Vec::new();
            let mut children: Vec<Option<(u32, u32)>> = vec![None; frontier.len()];
            for (k, fr) in frontier.iter().enumerate() {
                match chosen[k] {
                    Some(c) => {
                        let (l, r) = (nodes.len(), nodes.len() + 1);
                        nodes.push(Node::Leaf { weight: 0.0 });
                        nodes.push(Node::Leaf { weight: 0.0 });
                        nodes[fr.node] = Node::Split {
                            feature: c.feature,
                            threshold: c.threshold,
                            left: l,
                            right: r,
                        };
                        children[k] = Some((next.len() as u32, next.len() as u32 + 1));
                        next.push(Frontier {
                            node: l,
                            g: 0.0,
                            h: 0.0,
                        });
                        next.push(Frontier {
                            node: r,
                            g: 0.0,
                            h: 0.0,
                        });
                    }
                    None => {
                        nodes[fr.node] = Node::Leaf {
                            weight: leaf_weight(fr.g, fr.h, hp),
                        };
                    }
                }
            }
            if next.is_empty() {
                return Tree { nodes };
            }
            for (i, p) in pos.iter_mut().enumerate() {
                if *p == INACTIVE {
                    continue;
                }
                let k = *p as usize;
                *p = match (children[k], chosen[k]) {
                    (Some((l, r)), Some(c)) => {
                        let child = if self.data.column(c.feature)[i] < c.threshold {
                            l
                        } else {
                            r
                        };
                        let fr = &mut next[child as usize];
                        fr.g += self.grad[i];
                        fr.h += 1.0;
                        child
                    }
                    _ => INACTIVE,
                };
            }
            frontier = next;
        }
        for fr in &frontier {
            nodes[fr.node] = Node::Leaf {
                weight: leaf_weight(fr.g, fr.h, hp),
            };
        }
        Tree { nodes }
    }
}

fn leaf_value_at(tree: &Tree, data: &Dataset, row: usize) -> f64 {
    let mut i = 0;
    loop {
        match tree.nodes[i] {
            Node::Leaf { weight } => return weight,
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                i = if data.column(feature)[row] < threshold {
                    left
                } else {
                    right
                }
            }
        }
    }
}

/// Fits a boosted ensemble to `target` by exact greedy, level-wise tree
/// growth on squared-error gradients. Each round draws a Bernoulli row
/// sample and a per-tree feature subset from `rng`.
pub fn train(
    data: &Dataset,
    target: &[f64],
    hp: &GbtHyperparams,
    rng: &mut SimRng,
) -> Result<TreeEnsemble> {
    hp.validate()?;
    let n = data.n_rows();
    if data.n_features() == 0 {
        return Err(Error::Schema("empty feature set".into()));
    }
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "training needs at least 2 rows, got {n}"
        )));
    }
    if target.len() != n {
        return Err(Error::Schema(format!(
            "{} targets for {n} rows",
            target.len()
        )));
    }
    if target.iter().any(|y| !y.is_finite()) {
        return Err(Error::domain("non-finite training target"));
    }
    if n >= INACTIVE as usize {
        return Err(Error::domain("too many rows"));
    }

    let p = data.n_features();
    let sorted: Vec<Vec<u32>> = (0..p)
        .into_par_iter()
        .map(|j| {
            let col = data.column(j);
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
            idx
        })
        .collect();

    let base = target.iter().sum::<f64>() / n as f64;
    let mut pred = vec![base; n];
    let mut grad = vec![0.0; n];
    let n_cols = ((hp.colsample_bytree * p as f64).round() as usize).clamp(1, p);
    let mut trees = Vec::with_capacity(hp.n_estimators);

    for _ in 0..hp.n_estimators {
        for ((g, p), y) in grad.iter_mut().zip(&pred).zip(target) {
            *g = p - y;
        }
        let in_sample: Vec<bool> = if hp.subsample >= 1.0 {
            vec![true; n]
        } else {
            (0..n).map(|_| rng.random::<f64>() < hp.subsample).collect()
        };
        let features: Vec<usize> = if n_cols == p {
            (0..p).collect()
        } else {
            let mut f = index::sample(rng, p, n_cols).into_vec();
            f.sort_unstable();
            f
        };
        let tree = Builder {
            data,
            sorted: &sorted,
            grad: &grad,
            hp,
        }
        .build(&features, &in_sample);
        pred.par_iter_mut()
            .enumerate()
            .for_each(|(i, v)| *v += hp.learning_rate * leaf_value_at(&tree, data, i));
        trees.push(tree);
    }
    Ok(TreeEnsemble::new(base, *hp, data.schema().clone(), trees))
}
