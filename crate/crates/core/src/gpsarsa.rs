//! GP-SARSA: online Gaussian-process temporal-difference learning of Q with a
//! sparse dictionary of representative (belief, action) points.
//!
//! The kernel is `s * <b, b'> * [a == a']`. Rewards are modelled as
//! `r_t = Q(x_t) - gamma * Q(x_{t+1}) + n_t` with white noise
//! `n_t ~ N(0, sigma_obs^2)`. The posterior is kept in the form
//!
//! ```text
//! mean(x)  = k_D(x)^T alpha
//! var(x)   = k(x, x) - k_D(x)^T C k_D(x)
//! ```
//!
//! where `k_D(x)` are kernel values against the dictionary. An update with
//! `dk = k_D(x_t) - gamma k_D(x_{t+1})` and `da = K^-1 dk` is
//!
//! ```text
//! c = da - C dk,   v = sigma_obs^2 + dk^T c
//! alpha += c (r - dk^T alpha) / v,   C += c c^T / v
//! ```
//!
//! which costs `O(k^2)`. A point joins the dictionary when its squared
//! kernel-space residual against the span of the dictionary exceeds `nu`;
//! joining pads `alpha` and `C` with zeros, which leaves the posterior
//! unchanged. Because the kernel is block diagonal over actions, `K^-1` is
//! stored one block per action.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Linear belief kernel times a Kronecker delta on actions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub prior_scale: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self { prior_scale: 1.0 }
    }
}

impl KernelSpec {
    pub fn eval(&self, b: &[f64], a: usize, b2: &[f64], a2: usize) -> Result<f64> {
        if b.len() != b2.len() {
            return Err(Error::shape("kernel", &[b.len()], &[b2.len()]));
        }
        if a != a2 {
            return Ok(0.0);
        }
        Ok(self.prior_scale * dot(b, b2))
    }

    fn belief(&self, b: &[f64], b2: &[f64]) -> f64 {
        self.prior_scale * dot(b, b2)
    }
}

/// `<b, b'> * [a == a']`.
pub fn kernel(b: &[f64], a: usize, b2: &[f64], a2: usize) -> Result<f64> {
    KernelSpec::default().eval(b, a, b2, a2)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Debug, PartialEq)]
struct Block {
    /// Global dictionary indices of this action's points.
    members: Vec<usize>,
    /// Inverse Gram matrix of `members`, row-major.
    kinv: Vec<f64>,
}

impl Block {
    fn size(&self) -> usize {
        self.members.len()
    }

    fn mul_kinv(&self, v: &[f64]) -> Vec<f64> {
        let m = self.size();
        (0..m).map(|i| dot(&self.kinv[i * m..(i + 1) * m], v)).collect()
    }
}

/// Outcome of offering a point to the dictionary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Admission {
    Admitted { index: usize, residual: f64 },
    Rejected { residual: f64 },
}

/// Representative points, grouped by action, with cached inverse Gram blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseDictionary {
    pub nu: f64,
    pub kernel: KernelSpec,
    dim: usize,
    beliefs: Vec<Vec<f64>>,
    actions: Vec<usize>,
    blocks: Vec<Block>,
}

impl SparseDictionary {
    pub fn new(dim: usize, num_actions: usize, nu: f64, kernel: KernelSpec) -> Result<Self> {
        if !(nu >= 0.0) {
            return Err(Error::InvalidArgument(format!("admission threshold must be non-negative, got {nu}")));
        }
        if !(kernel.prior_scale > 0.0) {
            return Err(Error::InvalidArgument("kernel prior scale must be positive".into()));
        }
        Ok(Self {
            nu,
            kernel,
            dim,
            beliefs: Vec::new(),
            actions: Vec::new(),
            blocks: vec![
                Block {
                    members: Vec::new(),
                    kinv: Vec::new(),
                };
                num_actions
            ],
        })
    }

    pub fn len(&self) -> usize {
        self.beliefs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beliefs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_actions(&self) -> usize {
        self.blocks.len()
    }

    pub fn point(&self, i: usize) -> (&[f64], usize) {
        (&self.beliefs[i], self.actions[i])
    }

    fn check(&self, b: &[f64], a: usize) -> Result<()> {
        if b.len() != self.dim {
            return Err(Error::shape("dictionary point", &[self.dim], &[b.len()]));
        }
        if a >= self.blocks.len() {
            return Err(Error::IndexOutOfRange {
                what: "action",
                index: a,
                len: self.blocks.len(),
            });
        }
        Ok(())
    }

    /// Kernel values of `(b, a)` against the dictionary, as (global index, value)
    /// pairs over the action's block.
    fn k_block(&self, b: &[f64], a: usize) -> (Vec<usize>, Vec<f64>) {
        let blk = &self.blocks[a];
        let vals = blk.members.iter().map(|&i| self.kernel.belief(b, &self.beliefs[i])).collect();
        (blk.members.clone(), vals)
    }

    /// Squared residual of `(b, a)` against the span of the dictionary.
    pub fn residual(&self, b: &[f64], a: usize) -> Result<f64> {
        self.check(b, a)?;
        let (_, kd) = self.k_block(b, a);
        let proj = self.blocks[a].mul_kinv(&kd);
        Ok(self.kernel.belief(b, b) - dot(&kd, &proj))
    }

    fn rebuild_block(&mut self, a: usize) -> Result<()> {
        let blk = &self.blocks[a];
        let m = blk.size();
        let mut g = vec![0.0; m * m];
        for (r, &i) in blk.members.iter().enumerate() {
            for (c, &j) in blk.members.iter().enumerate() {
                g[r * m + c] = self.kernel.belief(&self.beliefs[i], &self.beliefs[j]);
            }
        }
        let inv = invert_spd(&g, m).ok_or_else(|| Error::NonFinite("dictionary Gram matrix is singular".into()))?;
        self.blocks[a].kinv = inv;
        Ok(())
    }
}

/// Offers `(b, a)` to the dictionary. The point is admitted iff its squared
/// residual exceeds `nu` (and a small relative floor, so exact duplicates are
/// never admitted even when `nu = 0`).
pub fn dictionary_admit(dict: &mut SparseDictionary, b: &[f64], a: usize) -> Result<Admission> {
    dict.check(b, a)?;
    let kxx = dict.kernel.belief(b, b);
    let (_, kd) = dict.k_block(b, a);
    let proj = dict.blocks[a].mul_kinv(&kd);
    let residual = kxx - dot(&kd, &proj);
    if !(residual > dict.nu && residual > 1e-9 * kxx.max(1.0)) {
        return Ok(Admission::Rejected { residual });
    }
    let index = dict.beliefs.len();
    dict.beliefs.push(b.to_vec());
    dict.actions.push(a);
    // Block inverse: [[K, k], [k^T, kxx]]^-1 with Schur complement `residual`.
    let blk = &mut dict.blocks[a];
    let m = blk.size();
    let n = m + 1;
    let mut next = vec![0.0; n * n];
    for i in 0..m {
        for j in 0..m {
            next[i * n + j] = blk.kinv[i * m + j] + proj[i] * proj[j] / residual;
        }
        next[i * n + m] = -proj[i] / residual;
        next[m * n + i] = -proj[i] / residual;
    }
    next[m * n + m] = 1.0 / residual;
    blk.members.push(index);
    if next.iter().all(|v| v.is_finite()) {
        blk.kinv = next;
    } else {
        log::warn!("incremental inverse Gram update for action {a} failed; recomputing");
        dict.rebuild_block(a)?;
    }
    Ok(Admission::Admitted { index, residual })
}

/// Posterior over Q in dictionary coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct GpPosterior {
    pub sigma_obs: f64,
    pub gamma: f64,
    alpha: Vec<f64>,
    /// `k x k`, row-major.
    cov: Vec<f64>,
}

impl GpPosterior {
    pub fn new(sigma_obs: f64, gamma: f64) -> Result<Self> {
        if !(sigma_obs > 0.0) {
            return Err(Error::InvalidArgument("observation noise must be positive".into()));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidArgument(format!("gamma must lie in [0, 1], got {gamma}")));
        }
        Ok(Self {
            sigma_obs,
            gamma,
            alpha: Vec::new(),
            cov: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn cov(&self) -> &[f64] {
        &self.cov
    }

    fn grow_to(&mut self, k: usize) {
        let old = self.alpha.len();
        if k <= old {
            return;
        }
        let mut cov = vec![0.0; k * k];
        for i in 0..old {
            cov[i * k..i * k + old].copy_from_slice(&self.cov[i * old..(i + 1) * old]);
        }
        self.cov = cov;
        self.alpha.resize(k, 0.0);
    }
}

fn admit_quietly(dict: &mut SparseDictionary, b: &[f64], a: usize) -> Result<()> {
    dictionary_admit(dict, b, a).map(|_| ())
}

/// One GP-SARSA step for `(b, a) -r-> (b', a')`; `next = None` marks a
/// terminal transition. Both points are offered to the dictionary first.
/// A numerically failed update is skipped with a warning and reported as
/// `Ok(false)`.
pub fn gp_update(
    post: &mut GpPosterior,
    dict: &mut SparseDictionary,
    b: &[f64],
    a: usize,
    r: f64,
    next: Option<(&[f64], usize)>,
) -> Result<bool> {
    if !r.is_finite() {
        return Err(Error::NonFinite(format!("reward {r}")));
    }
    admit_quietly(dict, b, a)?;
    if let Some((b2, a2)) = next {
        admit_quietly(dict, b2, a2)?;
    }
    let k = dict.len();
    post.grow_to(k);

    // Sparse dk and da over at most two action blocks.
    let mut dk: Vec<(usize, f64)> = Vec::new();
    let mut da: Vec<(usize, f64)> = Vec::new();
    let add_point = |b: &[f64], a: usize, w: f64, dk: &mut Vec<(usize, f64)>, da: &mut Vec<(usize, f64)>| {
        let (idx, kd) = dict.k_block(b, a);
        let proj = dict.blocks[a].mul_kinv(&kd);
        for ((&i, &kv), &pv) in idx.iter().zip(&kd).zip(&proj) {
            dk.push((i, w * kv));
            da.push((i, w * pv));
        }
    };
    add_point(b, a, 1.0, &mut dk, &mut da);
    if let Some((b2, a2)) = next {
        add_point(b2, a2, -post.gamma, &mut dk, &mut da);
    }

    let mut c = vec![0.0; k];
    for &(i, v) in &da {
        c[i] += v;
    }
    for &(j, w) in &dk {
        for (i, ci) in c.iter_mut().enumerate() {
            *ci -= post.cov[i * k + j] * w;
        }
    }
    let dk_c: f64 = dk.iter().map(|&(i, w)| w * c[i]).sum();
    let dk_alpha: f64 = dk.iter().map(|&(i, w)| w * post.alpha[i]).sum();
    let v = post.sigma_obs * post.sigma_obs + dk_c;
    let gain = (r - dk_alpha) / v;
    if !(v > 0.0) || !gain.is_finite() || c.iter().any(|x| !x.is_finite()) {
        log::warn!("GP-SARSA update skipped: innovation variance {v}");
        return Ok(false);
    }
    for (ai, ci) in post.alpha.iter_mut().zip(&c) {
        *ai += ci * gain;
    }
    for i in 0..k {
        let ci = c[i] / v;
        if ci == 0.0 {
            continue;
        }
        let row = &mut post.cov[i * k..(i + 1) * k];
        for (rj, cj) in row.iter_mut().zip(&c) {
            *rj += ci * cj;
        }
    }
    Ok(true)
}

/// Predictive mean and variance of `Q(b, a)`. Variance is clamped at zero.
pub fn gp_q(post: &GpPosterior, dict: &SparseDictionary, b: &[f64], a: usize) -> Result<(f64, f64)> {
    dict.check(b, a)?;
    let kxx = dict.kernel.belief(b, b);
    let (idx, kd) = dict.k_block(b, a);
    let k = post.len();
    let mut mean = 0.0;
    let mut quad = 0.0;
    for (p, &i) in idx.iter().enumerate() {
        if i >= k {
            continue;
        }
        mean += kd[p] * post.alpha[i];
        for (q, &j) in idx.iter().enumerate() {
            if j < k {
                quad += kd[p] * post.cov[i * k + j] * kd[q];
            }
        }
    }
    let mut var = kxx - quad;
    if var < 0.0 {
        if var < -1e-12 {
            log::warn!("negative GP predictive variance {var} clamped to 0");
        }
        var = 0.0;
    }
    Ok((mean, var))
}

/// Thompson step: one independent Gaussian draw per action, then argmax
/// (lowest index on ties).
pub fn gp_select_action<R: Rng + ?Sized>(post: &GpPosterior, dict: &SparseDictionary, b: &[f64], rng: &mut R) -> Result<usize> {
    let mut best = (0, f64::NEG_INFINITY);
    for a in 0..dict.num_actions() {
        let (m, v) = gp_q(post, dict, b, a)?;
        let z: f64 = rng.sample(StandardNormal);
        let q = m + v.sqrt() * z;
        if q > best.1 {
            best = (a, q);
        }
    }
    Ok(best.0)
}

/// Greedy action on the posterior mean.
pub fn gp_greedy_action(post: &GpPosterior, dict: &SparseDictionary, b: &[f64]) -> Result<usize> {
    let mut best = (0, f64::NEG_INFINITY);
    for a in 0..dict.num_actions() {
        let (m, _) = gp_q(post, dict, b, a)?;
        if m > best.1 {
            best = (a, m);
        }
    }
    Ok(best.0)
}

/// Mean dictionary-free self-similarity `k(x, x)` over sample beliefs; the
/// default admission threshold is a fraction of this.
pub fn mean_self_similarity(kernel: &KernelSpec, beliefs: &[Vec<f64>]) -> f64 {
    if beliefs.is_empty() {
        return 0.0;
    }
    beliefs.iter().map(|b| kernel.belief(b, b)).sum::<f64>() / beliefs.len() as f64
}

/// Writes the dictionary and posterior into `ck` under `prefix`.
pub fn save_gp(ck: &mut Checkpoint, prefix: &str, dict: &SparseDictionary, post: &GpPosterior) {
    let k = dict.len();
    let flat: Vec<f64> = dict.beliefs.iter().flatten().copied().collect();
    ck.push(format!("{prefix}beliefs"), &Tensor::new(vec![k, dict.dim], flat).expect("consistent dictionary"));
    ck.push(
        format!("{prefix}actions"),
        &Tensor::vector(dict.actions.iter().map(|&a| a as f64).collect()),
    );
    ck.push(format!("{prefix}alpha"), &Tensor::vector(post.alpha.clone()));
    ck.push(format!("{prefix}cov"), &Tensor::new(vec![k, k], post.cov.clone()).expect("consistent posterior"));
    for (a, blk) in dict.blocks.iter().enumerate() {
        let m = blk.size();
        ck.push(format!("{prefix}kinv.{a}"), &Tensor::new(vec![m, m], blk.kinv.clone()).expect("consistent block"));
    }
}

/// Restores state written by [`save_gp`] into an empty dictionary/posterior
/// pair with matching dimensions.
pub fn load_gp(ck: &Checkpoint, prefix: &str, dict: &mut SparseDictionary, post: &mut GpPosterior) -> Result<()> {
    let beliefs = ck.get(&format!("{prefix}beliefs"))?;
    let actions = ck.get(&format!("{prefix}actions"))?;
    let k = actions.len();
    if beliefs.shape() != [k, dict.dim] {
        return Err(Error::Checkpoint(format!("dictionary shape {:?}", beliefs.shape())));
    }
    dict.beliefs = (0..k).map(|i| beliefs.row(i).to_vec()).collect();
    dict.actions = actions.data().iter().map(|&a| a as usize).collect();
    for blk in dict.blocks.iter_mut() {
        blk.members.clear();
    }
    for (i, &a) in dict.actions.iter().enumerate() {
        let n = dict.blocks.len();
        dict.blocks
            .get_mut(a)
            .ok_or_else(|| Error::Checkpoint(format!("action {a} out of range {n}")))?
            .members
            .push(i);
    }
    for a in 0..dict.blocks.len() {
        let m = dict.blocks[a].size();
        let t = ck.get(&format!("{prefix}kinv.{a}"))?;
        if t.len() != m * m {
            return Err(Error::Checkpoint(format!("inverse Gram block {a} has {} entries", t.len())));
        }
        dict.blocks[a].kinv = t.into_data();
    }
    let alpha = ck.get(&format!("{prefix}alpha"))?;
    let cov = ck.get(&format!("{prefix}cov"))?;
    if alpha.len() != k || cov.len() != k * k {
        return Err(Error::Checkpoint("posterior size does not match dictionary".into()));
    }
    post.alpha = alpha.into_data();
    post.cov = cov.into_data();
    Ok(())
}

/// Inverse of a symmetric positive-definite matrix via Cholesky; `None` if
/// not numerically positive definite.
fn invert_spd(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = a[i * n + j] - (0..j).map(|p| l[i * n + p] * l[j * n + p]).sum::<f64>();
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    // Solve L L^T X = I column by column.
    let mut inv = vec![0.0; n * n];
    for col in 0..n {
        let mut y = vec![0.0; n];
        for i in 0..n {
            let rhs = if i == col { 1.0 } else { 0.0 };
            y[i] = (rhs - (0..i).map(|p| l[i * n + p] * y[p]).sum::<f64>()) / l[i * n + i];
        }
        for i in (0..n).rev() {
            let x = (y[i] - (i + 1..n).map(|p| l[p * n + i] * inv[p * n + col]).sum::<f64>()) / l[i * n + i];
            inv[i * n + col] = x;
        }
    }
    Some(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_belief(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        (0..d).map(|_| rng.random::<f64>()).collect()
    }

    #[test]
    fn kernel_values() {
        assert_eq!(kernel(&[1.0, 0.0, 2.0], 3, &[1.0, 0.0, 2.0], 3).unwrap(), 5.0);
        assert_eq!(kernel(&[1.0, 7.0], 0, &[3.0, 2.0], 1).unwrap(), 0.0);
        assert!(kernel(&[1.0], 0, &[1.0, 2.0], 0).is_err());
    }

    #[test]
    fn gram_matrix_is_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<(Vec<f64>, usize)> = (0..5).map(|_| (rand_belief(&mut rng, 4), rng.random_range(0..2))).collect();
        let g = DMatrix::from_fn(5, 5, |i, j| kernel(&pts[i].0, pts[i].1, &pts[j].0, pts[j].1).unwrap());
        let min = g.symmetric_eigenvalues().min();
        assert!(min >= -1e-10, "{min}");
    }

    #[test]
    fn first_point_admitted_and_duplicate_rejected() {
        let mut d = SparseDictionary::new(3, 2, 0.1, KernelSpec::default()).unwrap();
        let b = [0.5, 0.5, 1.0];
        assert!(matches!(dictionary_admit(&mut d, &b, 1).unwrap(), Admission::Admitted { index: 0, .. }));
        match dictionary_admit(&mut d, &b, 1).unwrap() {
            Admission::Rejected { residual } => assert!(residual.abs() < 1e-10),
            other => panic!("{other:?}"),
        }
        // same belief under another action is orthogonal, hence admitted
        assert!(matches!(dictionary_admit(&mut d, &b, 0).unwrap(), Admission::Admitted { .. }));
    }

    #[test]
    fn admissions_match_pseudo_inverse_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let nu = 0.01;
        let mut d = SparseDictionary::new(6, 1, nu, KernelSpec::default()).unwrap();
        let mut kept: Vec<Vec<f64>> = Vec::new();
        for t in 0..20 {
            // mix of fresh points and combinations of earlier ones
            let b = if t % 3 == 2 && kept.len() >= 2 {
                let (x, y) = (&kept[0], &kept[kept.len() - 1]);
                x.iter().zip(y).map(|(p, q)| 0.3 * p + 0.7 * q + 1e-3 * rng.random::<f64>()).collect()
            } else {
                rand_belief(&mut rng, 6)
            };
            let expected = if kept.is_empty() {
                dot(&b, &b)
            } else {
                let x = DMatrix::from_fn(kept.len(), 6, |i, j| kept[i][j]);
                let g = &x * x.transpose();
                let kv = &x * DVector::from_column_slice(&b);
                let pinv = g.pseudo_inverse(1e-12).unwrap();
                dot(&b, &b) - (kv.transpose() * pinv * &kv)[(0, 0)]
            };
            let admitted = matches!(dictionary_admit(&mut d, &b, 0).unwrap(), Admission::Admitted { .. });
            assert_eq!(admitted, expected > nu, "step {t}: residual {expected}");
            if admitted {
                kept.push(b);
            }
        }
        assert!(d.len() < 20 && d.len() >= 6);
    }

    #[test]
    fn repeated_observation_converges_to_reward() {
        let mut d = SparseDictionary::new(2, 1, 0.0, KernelSpec::default()).unwrap();
        let mut p = GpPosterior::new(1.0, 0.0).unwrap();
        let b = [1.0, 0.0];
        for _ in 0..200 {
            gp_update(&mut p, &mut d, &b, 0, 3.0, Some((&b, 0))).unwrap();
        }
        // scalar GP regression with prior var 1, noise 1, n obs: mean = n r / (n + 1)
        let (m, v) = gp_q(&p, &d, &b, 0).unwrap();
        assert!((m - 200.0 * 3.0 / 201.0).abs() < 1e-9, "{m}");
        assert!((v - 1.0 / 201.0).abs() < 1e-9);
    }

    #[test]
    fn zero_rewards_keep_zero_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut d = SparseDictionary::new(4, 3, 0.01, KernelSpec::default()).unwrap();
        let mut p = GpPosterior::new(5.0, 0.9).unwrap();
        let mut prev = (rand_belief(&mut rng, 4), 0);
        for t in 0..30 {
            let next = (rand_belief(&mut rng, 4), rng.random_range(0..3));
            let terminal = t % 7 == 6;
            gp_update(&mut p, &mut d, &prev.0, prev.1, 0.0, (!terminal).then_some((next.0.as_slice(), next.1))).unwrap();
            prev = next;
        }
        for a in 0..3 {
            assert_eq!(gp_q(&p, &d, &rand_belief(&mut rng, 4), a).unwrap().0, 0.0);
        }
    }

    #[test]
    fn empty_dictionary_gives_prior() {
        let d = SparseDictionary::new(3, 2, 0.1, KernelSpec { prior_scale: 2.0 }).unwrap();
        let p = GpPosterior::new(5.0, 0.99).unwrap();
        assert_eq!(gp_q(&p, &d, &[1.0, 2.0, 0.0], 1).unwrap(), (0.0, 10.0));
    }

    /// Dense batch GP-TD over every visited point, written against nalgebra.
    struct Dense {
        points: Vec<(Vec<f64>, usize)>,
        rows: Vec<(usize, Option<usize>, f64)>,
    }

    impl Dense {
        fn push(&mut self, b: &[f64], a: usize) -> usize {
            self.points.push((b.to_vec(), a));
            self.points.len() - 1
        }

        fn predict(&self, b: &[f64], a: usize, gamma: f64, sigma: f64) -> (f64, f64) {
            let n = self.points.len();
            let t = self.rows.len();
            let k = DMatrix::from_fn(n, n, |i, j| kernel(&self.points[i].0, self.points[i].1, &self.points[j].0, self.points[j].1).unwrap());
            let mut h = DMatrix::zeros(t, n);
            let mut r = DVector::zeros(t);
            for (row, &(i, j, rew)) in self.rows.iter().enumerate() {
                h[(row, i)] += 1.0;
                if let Some(j) = j {
                    h[(row, j)] -= gamma;
                }
                r[row] = rew;
            }
            let kx = DVector::from_fn(n, |i, _| kernel(b, a, &self.points[i].0, self.points[i].1).unwrap());
            let s = &h * &k * h.transpose() + DMatrix::identity(t, t) * sigma * sigma;
            let s_inv = s.try_inverse().unwrap();
            let hk = &h * &kx;
            let mean = (hk.transpose() * &s_inv * &r)[(0, 0)];
            let var = kernel(b, a, b, a).unwrap() - (hk.transpose() * &s_inv * &hk)[(0, 0)];
            (mean, var)
        }
    }

    #[test]
    fn sparse_matches_dense_batch_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (gamma, sigma) = (0.9, 2.0);
        let mut d = SparseDictionary::new(5, 3, 0.0, KernelSpec::default()).unwrap();
        let mut p = GpPosterior::new(sigma, gamma).unwrap();
        let mut dense = Dense {
            points: Vec::new(),
            rows: Vec::new(),
        };
        let mut cur = (rand_belief(&mut rng, 5), 0usize);
        for t in 0..40 {
            let next = (rand_belief(&mut rng, 5), rng.random_range(0..3));
            let terminal = t % 9 == 8;
            let r = rng.random_range(-1.0..2.0);
            gp_update(&mut p, &mut d, &cur.0, cur.1, r, (!terminal).then_some((next.0.as_slice(), next.1))).unwrap();
            let i = dense.push(&cur.0, cur.1);
            let j = (!terminal).then(|| dense.push(&next.0, next.1));
            dense.rows.push((i, j, r));
            cur = next;
        }
        for _ in 0..10 {
            let b = rand_belief(&mut rng, 5);
            for a in 0..3 {
                let (m, v) = gp_q(&p, &d, &b, a).unwrap();
                let (dm, dv) = dense.predict(&b, a, gamma, sigma);
                assert!((m - dm).abs() < 1e-8, "mean {m} vs {dm}");
                assert!((v - dv.max(0.0)).abs() < 1e-6, "var {v} vs {dv}");
            }
        }
    }

    #[test]
    fn observed_point_contracts_variance() {
        let mut d = SparseDictionary::new(2, 2, 0.0, KernelSpec::default()).unwrap();
        let mut p = GpPosterior::new(1.0, 0.5).unwrap();
        let b = [0.3, 0.8];
        for _ in 0..20 {
            gp_update(&mut p, &mut d, &b, 1, 1.0, None).unwrap();
        }
        let prior = kernel(&b, 1, &b, 1).unwrap();
        assert!(gp_q(&p, &d, &b, 1).unwrap().1 < prior);
    }

    #[test]
    fn thompson_selection() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = SparseDictionary::new(2, 2, 0.0, KernelSpec::default()).unwrap();
        let p = GpPosterior::new(1.0, 0.9).unwrap();
        let b = [0.6, 0.8];
        let ones = (0..10_000).filter(|_| gp_select_action(&p, &d, &b, &mut rng).unwrap() == 1).count();
        // symmetric posteriors: Binomial(1e4, 0.5) within 4 sigma
        assert!((ones as f64 - 5000.0).abs() < 200.0, "{ones}");

        // zero-variance posterior: deterministic greedy choice
        let zero = [0.0, 0.0];
        let first = gp_select_action(&p, &d, &zero, &mut rng).unwrap();
        assert!((0..50).all(|_| gp_select_action(&p, &d, &zero, &mut rng).unwrap() == first));

        let draw = |seed| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            (0..20).map(|_| gp_select_action(&p, &d, &b, &mut r).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(7), draw(7));
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut d = SparseDictionary::new(3, 2, 0.0, KernelSpec::default()).unwrap();
        let mut p = GpPosterior::new(1.0, 0.9).unwrap();
        for _ in 0..6 {
            let b = rand_belief(&mut rng, 3);
            let b2 = rand_belief(&mut rng, 3);
            gp_update(&mut p, &mut d, &b, 0, 1.0, Some((&b2, 1))).unwrap();
        }
        let mut ck = Checkpoint::new("gpsarsa", serde_json::Value::Null);
        save_gp(&mut ck, "gp.", &d, &p);
        let ck = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
        let mut d2 = SparseDictionary::new(3, 2, 0.0, KernelSpec::default()).unwrap();
        let mut p2 = GpPosterior::new(1.0, 0.9).unwrap();
        load_gp(&ck, "gp.", &mut d2, &mut p2).unwrap();
        assert_eq!(d, d2);
        assert_eq!(p, p2);
    }

    #[test]
    fn cholesky_inverse() {
        let a = [4.0, 1.0, 1.0, 3.0];
        let inv = invert_spd(&a, 2).unwrap();
        let det = 11.0;
        let want = [3.0 / det, -1.0 / det, -1.0 / det, 4.0 / det];
        for (x, y) in inv.iter().zip(want) {
            assert!((x - y).abs() < 1e-14);
        }
        assert!(invert_spd(&[1.0, 1.0, 1.0, 1.0], 2).is_none());
    }
}
