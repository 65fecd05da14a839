//! Learning curves and their CSV form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One evaluation of a policy after `dialogues` training dialogues.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub dialogues: usize,
    pub success_rate: f64,
    pub mean_reward: f64,
}

/// Evaluation points of a single (agent, seed) run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunCurve {
    pub agent: String,
    pub seed: u64,
    pub points: Vec<EvalPoint>,
}

impl RunCurve {
    pub fn validate(&self) -> Result<()> {
        validate_grid(&self.points.iter().map(|p| p.dialogues).collect::<Vec<_>>())?;
        for p in &self.points {
            check_rate(p.success_rate)?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for p in &self.points {
            w.serialize(p)?;
        }
        into_string(w)
    }

    pub fn from_csv(agent: &str, seed: u64, text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let points = r.deserialize().collect::<std::result::Result<Vec<EvalPoint>, _>>()?;
        let c = Self {
            agent: agent.to_string(),
            seed,
            points,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_csv()?)?)
    }

    /// Reads `<agent>_<seed>.csv`, taking agent and seed from the file name.
    pub fn load(path: &Path) -> Result<Self> {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let (agent, seed) = stem
            .rsplit_once('_')
            .and_then(|(a, s)| Some((a, s.parse::<u64>().ok()?)))
            .ok_or_else(|| Error::InvalidArgument(format!("`{}` is not named <agent>_<seed>.csv", path.display())))?;
        Self::from_csv(agent, seed, &std::fs::read_to_string(path)?)
    }
}

/// Seed-aggregated learning curve of one agent.
///
/// `success[i][s]` and `reward[i][s]` hold seed `seeds[s]` at checkpoint
/// `dialogues[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LearningCurve {
    pub agent: String,
    pub seeds: Vec<u64>,
    pub dialogues: Vec<usize>,
    pub success: Vec<Vec<f64>>,
    pub reward: Vec<Vec<f64>>,
}

impl LearningCurve {
    /// Joins per-seed runs that share a checkpoint grid.
    pub fn from_runs(runs: &[RunCurve]) -> Result<Self> {
        let first = runs.first().ok_or_else(|| Error::InvalidArgument("no runs to aggregate".into()))?;
        let dialogues: Vec<usize> = first.points.iter().map(|p| p.dialogues).collect();
        for r in runs {
            r.validate()?;
            if r.agent != first.agent {
                return Err(Error::InvalidArgument(format!("mixed agents `{}` and `{}`", first.agent, r.agent)));
            }
            if r.points.iter().map(|p| p.dialogues).ne(dialogues.iter().copied()) {
                return Err(Error::InvalidArgument(format!("seed {} has a different checkpoint grid", r.seed)));
            }
        }
        let column = |f: fn(&EvalPoint) -> f64| (0..dialogues.len()).map(|i| runs.iter().map(|r| f(&r.points[i])).collect()).collect();
        Ok(Self {
            agent: first.agent.clone(),
            seeds: runs.iter().map(|r| r.seed).collect(),
            success: column(|p| p.success_rate),
            reward: column(|p| p.mean_reward),
            dialogues,
        })
    }

    pub fn len(&self) -> usize {
        self.dialogues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dialogues.is_empty()
    }

    pub fn mean_success(&self) -> Vec<f64> {
        self.success.iter().map(|v| mean(v)).collect()
    }

    pub fn stderr_success(&self) -> Vec<f64> {
        self.success.iter().map(|v| stderr(v)).collect()
    }

    pub fn mean_reward(&self) -> Vec<f64> {
        self.reward.iter().map(|v| mean(v)).collect()
    }

    pub fn stderr_reward(&self) -> Vec<f64> {
        self.reward.iter().map(|v| stderr(v)).collect()
    }

    /// Success curve of seed index `s`.
    pub fn seed_success(&self, s: usize) -> Vec<f64> {
        self.success.iter().map(|v| v[s]).collect()
    }

    pub fn validate(&self) -> Result<()> {
        validate_grid(&self.dialogues)?;
        let n = self.seeds.len();
        if n == 0 {
            return Err(Error::InvalidArgument("curve without seeds".into()));
        }
        for rows in [&self.success, &self.reward] {
            if rows.len() != self.dialogues.len() || rows.iter().any(|r| r.len() != n) {
                return Err(Error::InvalidArgument("ragged curve".into()));
            }
        }
        self.success.iter().flatten().try_for_each(|&s| check_rate(s))
    }

    /// Columns: dialogues, success mean/stderr, reward mean/stderr, then
    /// `success_seed<k>` and `reward_seed<k>` per seed.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = ["dialogues", "success_mean", "success_stderr", "reward_mean", "reward_stderr"]
            .map(String::from)
            .to_vec();
        header.extend(self.seeds.iter().map(|s| format!("success_seed{s}")));
        header.extend(self.seeds.iter().map(|s| format!("reward_seed{s}")));
        w.write_record(&header)?;
        let (ms, ss, mr, sr) = (self.mean_success(), self.stderr_success(), self.mean_reward(), self.stderr_reward());
        for i in 0..self.len() {
            let mut row = vec![self.dialogues[i].to_string()];
            row.extend([ms[i], ss[i], mr[i], sr[i]].iter().map(f64::to_string));
            row.extend(self.success[i].iter().chain(&self.reward[i]).map(f64::to_string));
            w.write_record(&row)?;
        }
        into_string(w)
    }

    /// Parses [`to_csv`](Self::to_csv) output. Summary columns are
    /// recomputed from the per-seed values rather than trusted.
    pub fn from_csv(agent: &str, text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers()?.clone();
        let seeds = header
            .iter()
            .filter_map(|h| h.strip_prefix("success_seed"))
            .map(|s| s.parse::<u64>().map_err(|e| Error::InvalidArgument(format!("seed column `{s}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let n = seeds.len();
        if header.len() != 5 + 2 * n {
            return Err(Error::InvalidArgument(format!("expected {} columns, found {}", 5 + 2 * n, header.len())));
        }
        let mut c = Self {
            agent: agent.to_string(),
            seeds,
            dialogues: vec![],
            success: vec![],
            reward: vec![],
        };
        let num = |s: &str| s.parse::<f64>().map_err(|e| Error::InvalidArgument(format!("`{s}`: {e}")));
        for rec in r.records() {
            let rec = rec?;
            c.dialogues
                .push(rec[0].parse().map_err(|e| Error::InvalidArgument(format!("dialogues `{}`: {e}", &rec[0])))?);
            c.success.push((5..5 + n).map(|j| num(&rec[j])).collect::<Result<_>>()?);
            c.reward.push((5 + n..5 + 2 * n).map(|j| num(&rec[j])).collect::<Result<_>>()?);
        }
        c.validate()?;
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_csv()?)?)
    }

    /// Reads `<agent>_mean.csv`.
    pub fn load(path: &Path) -> Result<Self> {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let agent = stem
            .strip_suffix("_mean")
            .ok_or_else(|| Error::InvalidArgument(format!("`{}` is not named <agent>_mean.csv", path.display())))?;
        Self::from_csv(agent, &std::fs::read_to_string(path)?)
    }
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Standard error of the mean; zero for a single value.
pub fn stderr(v: &[f64]) -> f64 {
    let n = v.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(v);
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

fn validate_grid(d: &[usize]) -> Result<()> {
    if d.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(format!("checkpoints not strictly increasing: {d:?}")));
    }
    Ok(())
}

fn check_rate(s: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::InvalidArgument(format!("success rate {s} outside [0, 1]")));
    }
    Ok(())
}

fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::InvalidArgument(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn run(seed: u64, s: &[f64]) -> RunCurve {
        RunCurve {
            agent: "dqn".into(),
            seed,
            points: s
                .iter()
                .enumerate()
                .map(|(i, &x)| EvalPoint {
                    dialogues: 200 * i,
                    success_rate: x,
                    mean_reward: 20.0 * x - 5.0,
                })
                .collect(),
        }
    }

    #[test]
    fn aggregate_mean_is_arithmetic_mean() {
        let c = LearningCurve::from_runs(&[run(1, &[0.1, 0.5]), run(2, &[0.3, 0.6]), run(3, &[0.2, 0.7])]).unwrap();
        assert_eq!(c.mean_success()[0], (0.1 + 0.3 + 0.2) / 3.0);
        // sample sd of {0.5, 0.6, 0.7} is 0.1
        assert!((c.stderr_success()[1] - 0.1 / 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn grid_mismatch_rejected() {
        let mut b = run(2, &[0.3, 0.6]);
        b.points[1].dialogues = 300;
        assert!(LearningCurve::from_runs(&[run(1, &[0.1, 0.5]), b]).is_err());
    }

    #[test]
    fn out_of_range_success_rejected() {
        assert!(run(1, &[0.1, 1.5]).validate().is_err());
    }

    proptest! {
        #[test]
        fn csv_round_trip(seeds in 1usize..4, rows in proptest::collection::vec(proptest::collection::vec(0.0f64..=1.0, 3), 1..8)) {
            let runs: Vec<RunCurve> = (0..seeds)
                .map(|s| run(s as u64 + 1, &rows.iter().map(|r| r[s]).collect::<Vec<_>>()))
                .collect();
            for r in &runs {
                prop_assert_eq!(&RunCurve::from_csv("dqn", r.seed, &r.to_csv().unwrap()).unwrap(), r);
            }
            let c = LearningCurve::from_runs(&runs).unwrap();
            prop_assert_eq!(LearningCurve::from_csv("dqn", &c.to_csv().unwrap()).unwrap(), c);
        }
    }
}
