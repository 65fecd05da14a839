//! Acceptance suite. Each criterion prints one `PASS` or `FAIL` line with the
//! measured quantity, its pinned tolerance and the wall time; the process
//! exits non-zero if any criterion fails.
//!
//! Pass criterion numbers as arguments to run a subset:
//! `cargo test -p bdqn --test acceptance -- 1 4 9`.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use bdqn::agents::Algorithm;
use bdqn::bayes::{kl_diag_gaussian, GaussianPrior, VariationalParams};
use bdqn::env::{confuse, ChannelConfig, DialogueEnv, EnvConfig, Ontology, SlotValue, UserAct};
use bdqn::gpsarsa::{gp_q, gp_update, kernel, GpPosterior, KernelSpec, SparseDictionary};
use bdqn::gradcheck::finite_diff_check;
use bdqn::harness::{
    auc, evaluate, mid_training_success, run_experiment, train_run, CheckpointPolicy, ExperimentConfig, LearningCurve,
    RulePolicy,
};
use bdqn::nn::{Architecture, HiddenNoiseSpec, Network, Noise};
use bdqn::objectives::{
    bb_alpha_energy_with_noise, concrete_td_loss, free_energy, free_energy_with_noise, masked_heads_td_loss, td_loss, Batch,
    ObjectiveConfig, Transition,
};
use bdqn::params::ParamStore;
use bdqn::Tensor;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

// Pinned tolerances.
const GRAD_REL_ERR: f64 = 1e-4;
const GRAD_FIXTURES: usize = 10;
const KL_FIXTURES: usize = 20;
const KL_MC_SAMPLES: usize = 100_000;
const KL_SIGMAS: f64 = 3.0;
const ALPHA_SMALL: f64 = 1e-3;
const ALPHA_REL_DIFF: f64 = 0.01;
const ALPHA_FIXTURES: usize = 10;
const GP_MEAN_TOL: f64 = 1e-8;
const GP_VAR_TOL: f64 = 1e-6;
const GP_TRANSITIONS: usize = 50;
const CHANNEL_DRAWS: usize = 100_000;
const CHANNEL_SIGMAS: f64 = 3.0;
const RULE_POLICY_FLOOR: f64 = 0.95;
const DQN_FLOOR: f64 = 0.85;
const BBQN_AUC_WINS: usize = 2;
const BBQN_GP_GAP: f64 = 0.05;
const MC_VARIANCE_RESEEDS: usize = 100;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn main() -> ExitCode {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, &str, u64, fn() -> Outcome); 10] = [
        (1, "gradient oracle", 60, gradient_oracle),
        (2, "KL oracle", 60, kl_oracle),
        (3, "alpha -> 0 limit", 60, alpha_limit),
        (4, "GP sparse/dense equivalence", 60, gp_equivalence),
        (5, "channel calibration", 60, channel_calibration),
        (6, "solvability and learning floor", 30 * 60, learning_floor),
        (7, "noise-free ordering", 3 * 3600, noise_free_ordering),
        (8, "noise-mismatch ordering", 4 * 3600, noise_mismatch_ordering),
        (9, "MC-sample variance", 5 * 60, mc_variance),
        (10, "determinism", 10 * 60, determinism),
    ];
    let mut failed = 0;
    for (id, name, limit, run) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let took = start.elapsed();
        let in_time = took <= Duration::from_secs(limit);
        let pass = o.pass && in_time;
        failed += usize::from(!pass);
        println!(
            "{} criterion {id:>2} ({name}): {} [{:.1}s, limit {limit}s{}]",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64(),
            if in_time { "" } else { ", over time" }
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}

// ---------------------------------------------------------------------------
// Fixtures

fn random_batch(rng: &mut ChaCha8Rng, n: usize, dim: usize, actions: usize) -> Batch {
    let v = |rng: &mut ChaCha8Rng| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
    Batch::new(
        (0..n)
            .map(|_| Transition {
                belief: v(rng),
                action: rng.random_range(0..actions),
                reward: rng.random_range(-2.0..2.0),
                next_belief: v(rng),
                terminal: rng.random_bool(0.3),
            })
            .collect(),
    )
    .unwrap()
}

fn random_targets(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
}

fn net_with(rng: &mut ChaCha8Rng, configure: impl FnOnce(&mut Architecture)) -> (Network, ParamStore) {
    let mut arch = Architecture::mlp(4, &[7, 5], 3);
    configure(&mut arch);
    let mut store = ParamStore::new();
    let net = Network::new(&arch, &mut store, rng).unwrap();
    // Biases start at zero, so a row whose hidden input is entirely dropped
    // would sit exactly on the ReLU kink, where central differences see half
    // the slope. Jitter every parameter off it.
    for id in store.ids() {
        let mut t = store.get(id).clone();
        t.data_mut().iter_mut().for_each(|v| *v += rng.random_range(-0.1..0.1));
        store.set(id, t).unwrap();
    }
    (net, store)
}

fn variational(rng: &mut ChaCha8Rng) -> (Network, ParamStore) {
    let rho = rng.random_range(-3.0..-0.5);
    net_with(rng, |a| {
        a.variational = true;
        a.init_rho = rho;
    })
}

// ---------------------------------------------------------------------------
// 1. Gradients of every objective against central differences.

fn gradient_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = [0.0f64; 6];
    let names = ["td_loss", "free_energy", "bb_alpha_energy", "dropout td", "concrete td", "bootstrapped td"];
    for _ in 0..GRAD_FIXTURES {
        let batch = random_batch(&mut rng, 6, 4, 3);
        let y = random_targets(&mut rng, 6);

        let (net, store) = net_with(&mut rng, |_| {});
        let e = finite_diff_check(&store, |s| td_loss(&batch, &net, s, &y, &Noise::none(), 0)).unwrap();
        worst[0] = worst[0].max(e);

        let (net, store) = variational(&mut rng);
        let noises: Vec<Noise> = (0..3).map(|_| net.sample_noise(batch.len(), &mut rng).unwrap()).collect();
        let cfg = ObjectiveConfig {
            mc_samples: 3,
            kl_weight: rng.random_range(0.01..1.0),
            ..Default::default()
        };
        let e = finite_diff_check(&store, |s| free_energy_with_noise(&batch, &net, s, &y, &cfg, &noises)).unwrap();
        worst[1] = worst[1].max(e);
        let cfg = ObjectiveConfig {
            alpha: rng.random_range(0.1..1.0),
            ..cfg
        };
        let e = finite_diff_check(&store, |s| bb_alpha_energy_with_noise(&batch, &net, s, &y, &cfg, &noises)).unwrap();
        worst[2] = worst[2].max(e);

        let (net, store) = net_with(&mut rng, |a| a.hidden_noise = HiddenNoiseSpec::Dropout { rate: 0.2 });
        let noise = net.sample_noise(batch.len(), &mut rng).unwrap();
        let e = finite_diff_check(&store, |s| td_loss(&batch, &net, s, &y, &noise, 0)).unwrap();
        worst[3] = worst[3].max(e);

        let (net, store) = net_with(&mut rng, |a| {
            a.hidden_noise = HiddenNoiseSpec::Concrete {
                init_rate: 0.2,
                temperature: 0.5,
            }
        });
        let noise = net.sample_noise(batch.len(), &mut rng).unwrap();
        let e = finite_diff_check(&store, |s| concrete_td_loss(&batch, &net, s, &y, &noise, 1e-2, 1e-2)).unwrap();
        worst[4] = worst[4].max(e);

        let (net, store) = net_with(&mut rng, |a| a.heads = 3);
        let masks = (0..batch.len()).map(|_| (0..3).map(|_| rng.random_bool(0.6)).collect()).collect();
        let masked = Batch::with_masks(batch.transitions.clone(), Some(masks)).unwrap();
        let ys: Vec<Vec<f64>> = (0..3).map(|_| random_targets(&mut rng, 6)).collect();
        let e = finite_diff_check(&store, |s| masked_heads_td_loss(&masked, &net, s, &ys, &Noise::none())).unwrap();
        worst[5] = worst[5].max(e);
    }
    let max = worst.iter().copied().fold(0.0, f64::max);
    let parts: Vec<String> = names.iter().zip(worst).map(|(n, w)| format!("{n} {w:.1e}")).collect();
    outcome(
        max < GRAD_REL_ERR,
        format!("max relative error {max:.2e} < {GRAD_REL_ERR:.0e} over {GRAD_FIXTURES} fixtures ({})", parts.join(", ")),
    )
}

// ---------------------------------------------------------------------------
// 2. Closed-form KL against Monte Carlo.

fn log_normal(x: f64, mean: f64, sd: f64) -> f64 {
    -0.5 * ((x - mean) / sd).powi(2) - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

fn kl_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_z = 0.0f64;
    for _ in 0..KL_FIXTURES {
        let mu = rng.random_range(-2.0..2.0);
        let rho = rng.random_range(-3.0..1.0);
        let (pm, ps) = (rng.random_range(-1.0..1.0), rng.random_range(0.3..3.0));
        let sigma = (1.0f64 + f64::exp(rho)).ln();
        let closed = kl_diag_gaussian(
            &VariationalParams::new(Tensor::vector(vec![mu]), Tensor::vector(vec![rho])).unwrap(),
            &GaussianPrior::new(pm, ps).unwrap(),
        );
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..KL_MC_SAMPLES {
            let eps: f64 = StandardNormal.sample(&mut rng);
            let w = mu + sigma * eps;
            let d = log_normal(w, mu, sigma) - log_normal(w, pm, ps);
            s += d;
            s2 += d * d;
        }
        let n = KL_MC_SAMPLES as f64;
        let mean = s / n;
        let se = ((s2 / n - mean * mean) / n).sqrt();
        worst_z = worst_z.max((closed - mean).abs() / se);
    }
    outcome(
        worst_z <= KL_SIGMAS,
        format!("worst |closed - MC| = {worst_z:.2} standard errors (<= {KL_SIGMAS}) over {KL_FIXTURES} fixtures"),
    )
}

// ---------------------------------------------------------------------------
// 3. BB-alpha energy at small alpha against the free energy.

fn alpha_limit() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..ALPHA_FIXTURES {
        let batch = random_batch(&mut rng, 8, 4, 3);
        let y = random_targets(&mut rng, 8);
        let (net, store) = variational(&mut rng);
        let noises: Vec<Noise> = (0..4).map(|_| net.sample_noise(batch.len(), &mut rng).unwrap()).collect();
        let cfg = ObjectiveConfig {
            mc_samples: 4,
            kl_weight: 0.01,
            alpha: ALPHA_SMALL,
            ..Default::default()
        };
        let (f, _) = free_energy_with_noise(&batch, &net, &store, &y, &cfg, &noises).unwrap();
        let (e, _) = bb_alpha_energy_with_noise(&batch, &net, &store, &y, &cfg, &noises).unwrap();
        worst = worst.max(((e - f) / f).abs());
    }
    outcome(
        worst < ALPHA_REL_DIFF,
        format!("max relative difference {worst:.2e} < {ALPHA_REL_DIFF} at alpha = {ALPHA_SMALL} over {ALPHA_FIXTURES} fixtures"),
    )
}

// ---------------------------------------------------------------------------
// 4. Online sparse GP-TD with nu = 0 against a dense batch solve.

/// Every visited point and one row of `r = H q + noise` per transition.
struct DenseGpTd {
    points: Vec<(Vec<f64>, usize)>,
    rows: Vec<(usize, Option<usize>, f64)>,
}

impl DenseGpTd {
    fn add(&mut self, b: &[f64], a: usize) -> usize {
        self.points.push((b.to_vec(), a));
        self.points.len() - 1
    }

    fn predict(&self, b: &[f64], a: usize, gamma: f64, sigma: f64) -> (f64, f64) {
        let k = |x: &(Vec<f64>, usize), b: &[f64], a: usize| if x.1 == a { x.0.iter().zip(b).map(|(u, v)| u * v).sum() } else { 0.0 };
        let (n, t) = (self.points.len(), self.rows.len());
        let gram = DMatrix::from_fn(n, n, |i, j| k(&self.points[i], &self.points[j].0, self.points[j].1));
        let mut h = DMatrix::zeros(t, n);
        let mut r = DVector::zeros(t);
        for (row, &(i, j, rew)) in self.rows.iter().enumerate() {
            h[(row, i)] += 1.0;
            if let Some(j) = j {
                h[(row, j)] -= gamma;
            }
            r[row] = rew;
        }
        let kx = DVector::from_fn(n, |i, _| k(&self.points[i], b, a));
        let s = &h * &gram * h.transpose() + DMatrix::identity(t, t) * (sigma * sigma);
        let s_inv = s.try_inverse().expect("noise makes the system invertible");
        let hk = &h * &kx;
        let mean = (hk.transpose() * &s_inv * &r)[(0, 0)];
        let var = b.iter().map(|v| v * v).sum::<f64>() - (hk.transpose() * &s_inv * &hk)[(0, 0)];
        (mean, var)
    }
}

fn gp_equivalence() -> Outcome {
    let (mut worst_mean, mut worst_var) = (0.0f64, 0.0f64);
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(40 + seed);
        let (dim, actions, gamma, sigma) = (6, 3, 0.95, rng.random_range(0.5..5.0));
        let belief = |rng: &mut ChaCha8Rng| (0..dim).map(|_| rng.random_range(0.0..1.0)).collect::<Vec<f64>>();
        let mut dict = SparseDictionary::new(dim, actions, 0.0, KernelSpec { prior_scale: 1.0 }).unwrap();
        let mut post = GpPosterior::new(sigma, gamma).unwrap();
        let mut dense = DenseGpTd {
            points: vec![],
            rows: vec![],
        };
        let mut cur = (belief(&mut rng), rng.random_range(0..actions));
        for t in 0..GP_TRANSITIONS {
            let next = (belief(&mut rng), rng.random_range(0..actions));
            let terminal = t % 7 == 6 || t + 1 == GP_TRANSITIONS;
            let r = rng.random_range(-1.0..20.0);
            gp_update(&mut post, &mut dict, &cur.0, cur.1, r, (!terminal).then_some((next.0.as_slice(), next.1))).unwrap();
            let i = dense.add(&cur.0, cur.1);
            let j = (!terminal).then(|| dense.add(&next.0, next.1));
            dense.rows.push((i, j, r));
            cur = if terminal { (belief(&mut rng), rng.random_range(0..actions)) } else { next };
        }
        let mut probes: Vec<(Vec<f64>, usize)> = dense.points.clone();
        probes.extend((0..20).map(|_| (belief(&mut rng), rng.random_range(0..actions))));
        for (b, a) in &probes {
            let (m, v) = gp_q(&post, &dict, b, *a).unwrap();
            let (dm, dv) = dense.predict(b, *a, gamma, sigma);
            assert_eq!(kernel(b, *a, b, *a).unwrap(), b.iter().map(|x| x * x).sum::<f64>());
            worst_mean = worst_mean.max((m - dm).abs());
            worst_var = worst_var.max((v - dv.max(0.0)).abs());
        }
    }
    outcome(
        worst_mean < GP_MEAN_TOL && worst_var < GP_VAR_TOL,
        format!(
            "max |mean diff| {worst_mean:.1e} < {GP_MEAN_TOL:.0e}, max |variance diff| {worst_var:.1e} < {GP_VAR_TOL:.0e} ({GP_TRANSITIONS} transitions, 5 runs)"
        ),
    )
}

// ---------------------------------------------------------------------------
// 5. Top-hypothesis error rate of the channel.

fn random_user_act(rng: &mut ChaCha8Rng, ont: &Ontology) -> UserAct {
    match rng.random_range(0..5) {
        0 | 1 => {
            let slot = rng.random_range(0..ont.num_informable());
            let value = if rng.random_bool(0.1) {
                SlotValue::DontCare
            } else {
                SlotValue::Value(rng.random_range(0..ont.num_values(slot)))
            };
            UserAct::Inform { slot, value }
        }
        2 => UserAct::Request {
            slot: rng.random_range(0..ont.num_requestable()),
        },
        3 => [UserAct::Affirm, UserAct::Negate][rng.random_range(0..2)].clone(),
        _ => UserAct::Bye,
    }
}

fn channel_calibration() -> Outcome {
    let ont = Ontology::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut pass = true;
    let mut parts = vec![];
    for e in [0.0, 0.15, 0.45] {
        let cfg = ChannelConfig::with_error_rate(e);
        let wrong = (0..CHANNEL_DRAWS)
            .filter(|_| {
                let act = random_user_act(&mut rng, &ont);
                confuse(act.clone(), &cfg, &ont, &mut rng).unwrap().top() != Some(&act)
            })
            .count();
        let n = CHANNEL_DRAWS as f64;
        let rate = wrong as f64 / n;
        let sd = (e * (1.0 - e) / n).sqrt();
        let ok = (rate - e).abs() <= CHANNEL_SIGMAS * sd;
        pass &= ok;
        parts.push(format!("e={e}: {rate:.4} (band ±{:.4})", CHANNEL_SIGMAS * sd));
    }
    outcome(pass, format!("{} over {CHANNEL_DRAWS} draws each", parts.join(", ")))
}

// ---------------------------------------------------------------------------
// Training runs shared by criteria 6, 7 and 10.

fn default_config(agents: &[Algorithm]) -> ExperimentConfig {
    ExperimentConfig {
        agents: agents.to_vec(),
        checkpoints: CheckpointPolicy::None,
        ..Default::default()
    }
}

struct NoiseFree {
    dir: tempfile::TempDir,
    curves: Vec<LearningCurve>,
}

fn noise_free_runs() -> &'static NoiseFree {
    static RUNS: std::sync::OnceLock<NoiseFree> = std::sync::OnceLock::new();
    RUNS.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let cfg = default_config(&[Algorithm::Dqn, Algorithm::Bbqn, Algorithm::Gpsarsa]);
        let out = run_experiment(&cfg, dir.path()).unwrap();
        assert!(out.failures.is_empty(), "{:?}", out.failures);
        NoiseFree { dir, curves: out.curves }
    })
}

fn curve<'a>(curves: &'a [LearningCurve], agent: Algorithm) -> &'a LearningCurve {
    curves.iter().find(|c| c.agent == agent.tag()).unwrap()
}

fn final_success(c: &LearningCurve) -> f64 {
    *c.mean_success().last().unwrap()
}

// 6. The task is solvable and plain DQN learns it.
fn learning_floor() -> Outcome {
    let env_cfg = EnvConfig::with_error_rate(0.0);
    let layout = DialogueEnv::builtin(env_cfg.clone(), 0).unwrap().layout().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let rule = evaluate(&mut RulePolicy(layout), &env_cfg, 200, &mut rng).unwrap();
    let dqn = final_success(curve(&noise_free_runs().curves, Algorithm::Dqn));
    outcome(
        rule.success_rate >= RULE_POLICY_FLOOR && dqn >= DQN_FLOOR,
        format!(
            "rule policy {:.3} >= {RULE_POLICY_FLOOR}; DQN final success {dqn:.3} >= {DQN_FLOOR} (3 seeds, e = 0, 4000 dialogues)",
            rule.success_rate
        ),
    )
}

// 7. Noise-free ordering: BBQN learns at least as fast as DQN and ends near
// GP-SARSA.
fn noise_free_ordering() -> Outcome {
    let curves = &noise_free_runs().curves;
    let (dqn, bbqn, gp) = (curve(curves, Algorithm::Dqn), curve(curves, Algorithm::Bbqn), curve(curves, Algorithm::Gpsarsa));
    let x = &dqn.dialogues;
    let wins = (0..3)
        .filter(|&s| auc(x, &bbqn.seed_success(s)) >= auc(x, &dqn.seed_success(s)))
        .count();
    let gap = (final_success(bbqn) - final_success(gp)).abs();
    let per_seed: Vec<String> = (0..3)
        .map(|s| {
            format!(
                "{:.3} vs {:.3}",
                auc(x, &bbqn.seed_success(s)) / 4000.0,
                auc(x, &dqn.seed_success(s)) / 4000.0
            )
        })
        .collect();
    outcome(
        wins >= BBQN_AUC_WINS && gap <= BBQN_GP_GAP,
        format!(
            "BBQN AUC >= DQN AUC in {wins}/3 seeds (need {BBQN_AUC_WINS}; normalised {}); |BBQN - GPSARSA| final = {gap:.3} <= {BBQN_GP_GAP}",
            per_seed.join(", ")
        ),
    )
}

// 8. Train at 15% error, evaluate at 45%: GPSARSA >= BBQN >= DQN over the
// middle of training.
fn noise_mismatch_ordering() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        train_error: 0.15,
        eval_error: 0.45,
        ..default_config(&[Algorithm::Dqn, Algorithm::Bbqn, Algorithm::Gpsarsa])
    };
    let out = run_experiment(&cfg, dir.path()).unwrap();
    if !out.failures.is_empty() {
        return outcome(false, format!("runs failed: {:?}", out.failures));
    }
    let mid = |a| mid_training_success(curve(&out.curves, a));
    let (gp, bbqn, dqn) = (mid(Algorithm::Gpsarsa), mid(Algorithm::Bbqn), mid(Algorithm::Dqn));
    outcome(
        gp >= bbqn && bbqn >= dqn,
        format!("mid-training success GPSARSA {gp:.3} >= BBQN {bbqn:.3} >= DQN {dqn:.3} (seed means, checkpoints 1000..3000)"),
    )
}

// ---------------------------------------------------------------------------
// 9. More Monte Carlo samples, lower estimator variance.

fn variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
}

fn mc_variance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let batch = random_batch(&mut rng, 32, 4, 3);
    let y = random_targets(&mut rng, 32);
    let (net, store) = net_with(&mut rng, |a| {
        a.variational = true;
        a.init_rho = -1.0;
    });
    let estimates = |k: usize| {
        let cfg = ObjectiveConfig {
            mc_samples: k,
            kl_weight: 1e-3,
            ..Default::default()
        };
        let (mut losses, mut grads) = (vec![], vec![]);
        for seed in 0..MC_VARIANCE_RESEEDS as u64 {
            let mut r = ChaCha8Rng::seed_from_u64(1000 + seed);
            let (l, g) = free_energy(&batch, &net, &store, &y, &cfg, &mut r).unwrap();
            losses.push(l);
            grads.push(g.flatten());
        }
        let dims = grads[0].len();
        let grad_var: f64 = (0..dims).map(|d| variance(&grads.iter().map(|g| g[d]).collect::<Vec<_>>())).sum();
        (variance(&losses), grad_var)
    };
    let (l1, g1) = estimates(1);
    let (l16, g16) = estimates(16);
    outcome(
        l16 < l1 && g16 < g1,
        format!("over {MC_VARIANCE_RESEEDS} reseeds: loss variance K=16 {l16:.3e} < K=1 {l1:.3e}; total gradient variance {g16:.3e} < {g1:.3e}"),
    )
}

// ---------------------------------------------------------------------------
// 10. Re-running `train` reproduces the CSV bytes.

fn determinism() -> Outcome {
    let first = noise_free_runs();
    let again = tempfile::tempdir().unwrap();
    let cfg = default_config(&[]);
    let mut identical = vec![];
    for alg in [Algorithm::Dqn, Algorithm::Bbqn, Algorithm::Gpsarsa] {
        train_run(&cfg, alg, 1, Some(again.path())).unwrap();
        let read = |d: &Path| std::fs::read(d.join("curves").join(format!("{}_1.csv", alg.tag()))).unwrap();
        identical.push((alg, read(first.dir.path()) == read(again.path())));
    }
    let all = identical.iter().all(|(_, same)| *same);
    let parts: Vec<String> = identical
        .iter()
        .map(|(a, same)| format!("{a} {}", if *same { "identical" } else { "DIFFERENT" }))
        .collect();
    outcome(all, format!("seed-1 curves re-trained in a fresh process state: {}", parts.join(", ")))
}

