//! Ranking of learning curves by final success and area under the curve.

use std::fmt::Write;

use super::curve::{mean, LearningCurve};
use crate::error::{Error, Result};

/// Trapezoidal area under `y` over the dialogue grid `x`.
pub fn auc(x: &[usize], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(x, y)| (x[1] - x[0]) as f64 * (y[0] + y[1]) / 2.0).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentSummary {
    pub agent: String,
    pub final_success: f64,
    pub final_stderr: f64,
    /// AUC of the seed-mean success curve.
    pub auc: f64,
    pub seed_aucs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairwiseComparison {
    pub a: String,
    pub b: String,
    /// `auc(a) - auc(b)` on the seed means.
    pub auc_diff: f64,
    /// Seeds where `a`'s AUC is above, below and equal to `b`'s.
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    /// Best AUC first.
    pub ranking: Vec<AgentSummary>,
    pub pairs: Vec<PairwiseComparison>,
}

/// Compares curves that share one checkpoint grid. Seeds are paired by
/// value; only seeds common to both curves enter the sign counts.
pub fn compare(curves: &[LearningCurve]) -> Result<Comparison> {
    let first = curves.first().ok_or_else(|| Error::InvalidArgument("nothing to compare".into()))?;
    for c in curves {
        c.validate()?;
        if c.dialogues != first.dialogues {
            return Err(Error::InvalidArgument(format!("`{}` and `{}` use different checkpoint grids", c.agent, first.agent)));
        }
    }
    let x = &first.dialogues;
    let summaries: Vec<AgentSummary> = curves
        .iter()
        .map(|c| {
            let last = c.len() - 1;
            AgentSummary {
                agent: c.agent.clone(),
                final_success: c.mean_success()[last],
                final_stderr: c.stderr_success()[last],
                auc: auc(x, &c.mean_success()),
                seed_aucs: (0..c.seeds.len()).map(|s| auc(x, &c.seed_success(s))).collect(),
            }
        })
        .collect();
    let mut pairs = vec![];
    for i in 0..curves.len() {
        for j in i + 1..curves.len() {
            let (mut wins, mut losses, mut ties) = (0, 0, 0);
            for (si, seed) in curves[i].seeds.iter().enumerate() {
                if let Some(sj) = curves[j].seeds.iter().position(|s| s == seed) {
                    let (a, b) = (summaries[i].seed_aucs[si], summaries[j].seed_aucs[sj]);
                    match a.partial_cmp(&b) {
                        Some(std::cmp::Ordering::Greater) => wins += 1,
                        Some(std::cmp::Ordering::Less) => losses += 1,
                        _ => ties += 1,
                    }
                }
            }
            pairs.push(PairwiseComparison {
                a: curves[i].agent.clone(),
                b: curves[j].agent.clone(),
                auc_diff: summaries[i].auc - summaries[j].auc,
                wins,
                losses,
                ties,
            });
        }
    }
    let mut ranking = summaries;
    ranking.sort_by(|a, b| b.auc.total_cmp(&a.auc).then_with(|| a.agent.cmp(&b.agent)));
    Ok(Comparison { ranking, pairs })
}

impl Comparison {
    pub fn summary(&self, agent: &str) -> Option<&AgentSummary> {
        self.ranking.iter().find(|s| s.agent == agent)
    }

    /// Markdown report. AUC is normalised by the budget so it reads as an
    /// average success rate.
    pub fn to_markdown(&self, budget: usize) -> String {
        let norm = budget.max(1) as f64;
        let mut s = String::from("## Ranking\n\n| rank | agent | final success | ± s.e. | AUC / budget | per-seed AUC / budget |\n|---|---|---|---|---|---|\n");
        for (i, r) in self.ranking.iter().enumerate() {
            let seeds: Vec<String> = r.seed_aucs.iter().map(|a| format!("{:.3}", a / norm)).collect();
            let _ = writeln!(
                s,
                "| {} | {} | {:.3} | {:.3} | {:.3} | {} |",
                i + 1,
                r.agent,
                r.final_success,
                r.final_stderr,
                r.auc / norm,
                seeds.join(", ")
            );
        }
        s.push_str("\n## Pairwise AUC differences\n\n| a | b | (AUC a − AUC b) / budget | seeds a > b | a < b | ties |\n|---|---|---|---|---|---|\n");
        for p in &self.pairs {
            let _ = writeln!(s, "| {} | {} | {:+.4} | {} | {} | {} |", p.a, p.b, p.auc_diff / norm, p.wins, p.losses, p.ties);
        }
        s
    }
}

/// Seed-averaged success over the checkpoints in the middle half of
/// training, `B/4 <= dialogues <= 3B/4` with `B` the last checkpoint.
pub fn mid_training_success(c: &LearningCurve) -> f64 {
    let budget = c.dialogues.last().copied().unwrap_or(0) as f64;
    let m = c.mean_success();
    let window: Vec<f64> = c
        .dialogues
        .iter()
        .zip(&m)
        .filter(|(&d, _)| 4.0 * d as f64 >= budget && 4.0 * d as f64 <= 3.0 * budget)
        .map(|(_, &s)| s)
        .collect();
    if window.is_empty() {
        mean(&m)
    } else {
        mean(&window)
    }
}
