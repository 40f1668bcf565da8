use serde::{Deserialize, Serialize};

use super::loss::GradientPair;
use super::split::{best_over_features, Direction, FeatureIndex, NodeStats};
use super::GbdtParams;
use crate::dataset::Instance;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: u32,
        threshold: f64,
        default_child: Direction,
        left: u32,
        right: u32,
    },
    Leaf {
        weight: f64,
    },
}

/// Binary regression tree stored as a node arena rooted at index 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn single_leaf(weight: f64) -> Self {
        Self {
            nodes: vec![Node::Leaf { weight }],
        }
    }

    /// Arena index of the leaf `x` falls into.
    pub fn leaf_index(&self, x: &Instance) -> usize {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { .. } => return at,
                Node::Split {
                    feature,
                    threshold,
                    default_child,
                    left,
                    right,
                } => {
                    let dir = match x.feature(*feature) {
                        Some(v) if v < *threshold => Direction::Left,
                        Some(_) => Direction::Right,
                        None => *default_child,
                    };
                    at = match dir {
                        Direction::Left => *left,
                        Direction::Right => *right,
                    } as usize;
                }
            }
        }
    }

    pub fn predict(&self, x: &Instance) -> f64 {
        match self.nodes[self.leaf_index(x)] {
            Node::Leaf { weight } => weight,
            Node::Split { .. } => unreachable!("leaf_index returns a leaf"),
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaf_weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { weight } => Some(*weight),
            Node::Split { .. } => None,
        })
    }

    pub fn num_leaves(&self) -> usize {
        self.leaf_weights().count()
    }

    /// `gamma * leaves + lambda/2 * sum(w^2)`.
    pub fn regularization(&self, lambda: f64, gamma: f64) -> f64 {
        let sq: f64 = self.leaf_weights().map(|w| w * w).sum();
        gamma * self.num_leaves() as f64 + 0.5 * lambda * sq
    }
}

/// Second-order objective of `tree` on the given instances and gradients,
/// including regularization.
pub fn tree_objective(
    tree: &Tree,
    instances: &[Instance],
    grads: &[GradientPair],
    lambda: f64,
    gamma: f64,
) -> f64 {
    let loss: f64 = instances
        .iter()
        .zip(grads)
        .map(|(x, gp)| {
            let f = tree.predict(x);
            gp.g * f + 0.5 * gp.h * f * f
        })
        .sum();
    loss + tree.regularization(lambda, gamma)
}

pub fn leaf_weight(grad_sum: f64, hess_sum: f64, lambda: f64) -> f64 {
    let denom = hess_sum + lambda;
    if denom > 0.0 {
        -grad_sum / denom
    } else {
        0.0
    }
}

fn stats_of(rows: &[u32], grads: &[GradientPair]) -> NodeStats {
    rows.iter().fold(NodeStats::default(), |mut acc, &r| {
        let gp = grads[r as usize];
        acc.g += gp.g;
        acc.h += gp.h;
        acc.n += 1;
        acc
    })
}

struct Open {
    node: usize,
    rows: Vec<u32>,
    stats: NodeStats,
}

/// Grows one tree level by level up to `params.max_depth` using exact greedy
/// splits. `grads[r]` belongs to row `r` of `index`.
pub fn grow_tree(index: &FeatureIndex, grads: &[GradientPair], params: &GbdtParams) -> Tree {
    assert_eq!(index.num_rows, grads.len(), "one gradient pair per row");
    let n = index.num_rows;
    let all: Vec<u32> = (0..n as u32).collect();
    let mut nodes = vec![Node::Leaf { weight: 0.0 }];
    let mut frontier = vec![Open {
        node: 0,
        stats: stats_of(&all, grads),
        rows: all,
    }];
    let mut slot_of_row = vec![u32::MAX; n];
    let mut goes_left = vec![false; n];

    for _ in 0..params.max_depth {
        if frontier.is_empty() {
            break;
        }
        for (s, open) in frontier.iter().enumerate() {
            for &r in &open.rows {
                slot_of_row[r as usize] = s as u32;
            }
        }
        let stats: Vec<NodeStats> = frontier.iter().map(|o| o.stats).collect();
        let candidates = best_over_features(index, &slot_of_row, &stats, grads, params);

        let mut next = Vec::new();
        for (s, (open, cand)) in frontier.into_iter().zip(candidates).enumerate() {
            let Some(c) = cand.filter(|c| c.gain > 0.0) else {
                nodes[open.node] = Node::Leaf {
                    weight: leaf_weight(open.stats.g, open.stats.h, params.lambda),
                };
                continue;
            };
            let default_left = c.default_child == Direction::Left;
            for &r in &open.rows {
                goes_left[r as usize] = default_left;
            }
            for &(v, r) in &index.columns[c.feature as usize] {
                if slot_of_row[r as usize] == s as u32 {
                    goes_left[r as usize] = v < c.threshold;
                }
            }
            let (left_rows, right_rows): (Vec<u32>, Vec<u32>) =
                open.rows.iter().partition(|&&r| goes_left[r as usize]);

            let left = nodes.len();
            nodes.push(Node::Leaf { weight: 0.0 });
            nodes.push(Node::Leaf { weight: 0.0 });
            nodes[open.node] = Node::Split {
                feature: c.feature,
                threshold: c.threshold,
                default_child: c.default_child,
                left: left as u32,
                right: left as u32 + 1,
            };
            next.push(Open {
                node: left,
                stats: stats_of(&left_rows, grads),
                rows: left_rows,
            });
            next.push(Open {
                node: left + 1,
                stats: stats_of(&right_rows, grads),
                rows: right_rows,
            });
        }
        for r in slot_of_row.iter_mut() {
            *r = u32::MAX;
        }
        frontier = next;
    }

    for open in frontier {
        nodes[open.node] = Node::Leaf {
            weight: leaf_weight(open.stats.g, open.stats.h, params.lambda),
        };
    }
    Tree { nodes }
}

pub fn train_tree(
    instances: &[Instance],
    grads: &[GradientPair],
    dimension: usize,
    params: &GbdtParams,
) -> Tree {
    grow_tree(&FeatureIndex::build(instances, dimension), grads, params)
}
