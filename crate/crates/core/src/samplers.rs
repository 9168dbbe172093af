//! ULA and SGLD chains over decomposed potentials, and synchronously coupled
//! runs on adjacent datasets.
//!
//! A potential is split as `U_D = V_D + K` where `K` is shared, smooth and
//! strongly convex and `∇V_D` is uniformly bounded by `c`. Two chains on
//! adjacent datasets driven by the same Gaussian noise (and, for SGLD, the
//! same minibatches) stay within `2c/(μ − γL²/2)` of each other forever.

use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::accountant::DriftSpec;
use crate::error::{ensure, Error, Result};
use crate::rng::{fill_standard_normal, stream_rng};

/// `x ↦ ∇K(x)`, written into the output slice.
pub type Gradient = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// `(x, data) ↦ ∇V(x; data)`, written into the output slice.
pub type DataGradient = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;

/// Potential `U_D = V_D + K` with declared regularity constants.
///
/// The dataset of a potential is an opaque parameter vector consumed by the
/// bounded part.
#[derive(Clone)]
pub struct DecomposedPotential {
    pub dim: usize,
    pub lipschitz: f64,
    pub mu: f64,
    pub c: f64,
    convex: Gradient,
    bounded: DataGradient,
}

impl std::fmt::Debug for DecomposedPotential {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DecomposedPotential")
            .field("dim", &self.dim)
            .field("lipschitz", &self.lipschitz)
            .field("mu", &self.mu)
            .field("c", &self.c)
            .finish_non_exhaustive()
    }
}

fn check_constants(dim: usize, lipschitz: f64, mu: f64, c: f64) -> Result<()> {
    ensure(dim >= 1, || "dimension must be positive".into())?;
    ensure(mu > 0.0 && lipschitz >= mu && lipschitz.is_finite(), || {
        format!("need 0 < mu <= L, got mu={mu} L={lipschitz}")
    })?;
    ensure(c >= 0.0 && c.is_finite(), || format!("c must be nonnegative, got {c}"))
}

fn check_curvatures(curvatures: &[f64]) -> Result<()> {
    ensure(!curvatures.is_empty(), || "need at least one curvature".into())?;
    ensure(curvatures.iter().all(|&k| k > 0.0 && k.is_finite()), || {
        "curvatures must be positive".into()
    })
}

fn quadratic_gradient(curvatures: Vec<f64>) -> Gradient {
    Arc::new(move |x, out| {
        for ((o, xi), k) in out.iter_mut().zip(x).zip(&curvatures) {
            *o = k * xi;
        }
    })
}

fn extremes(curvatures: &[f64]) -> (f64, f64) {
    let lo = curvatures.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = curvatures.iter().copied().fold(0.0, f64::max);
    (lo, hi)
}

impl DecomposedPotential {
    pub fn new(dim: usize, lipschitz: f64, mu: f64, c: f64, convex: Gradient, bounded: DataGradient) -> Result<Self> {
        check_constants(dim, lipschitz, mu, c)?;
        Ok(Self {
            dim,
            lipschitz,
            mu,
            c,
            convex,
            bounded,
        })
    }

    /// `K(x) = Σ κᵢxᵢ²/2` and `V_D(x) = ⟨slope, x⟩`, where the dataset is the
    /// slope vector. `μ = min κᵢ`, `L = max κᵢ`.
    ///
    /// Datasets whose slope has norm above `c` break the declared constants;
    /// [`DecomposedPotential::adjacent_pair`] returns the extreme valid pair.
    pub fn gaussian(curvatures: Vec<f64>, c: f64) -> Result<Self> {
        check_curvatures(&curvatures)?;
        let (mu, lipschitz) = extremes(&curvatures);
        let dim = curvatures.len();
        Self::new(
            dim,
            lipschitz,
            mu,
            c,
            quadratic_gradient(curvatures),
            Arc::new(|_, slope, out| out.copy_from_slice(slope)),
        )
    }

    /// Quadratic `K` plus a bounded non-convex perturbation:
    /// `∂ᵢV_D(x) = (c/√d)·cos(xᵢ + φᵢ)` with the dataset the phase vector `φ`.
    /// `|∇V_D| ≤ c` for every dataset.
    pub fn sinusoidal(curvatures: Vec<f64>, c: f64) -> Result<Self> {
        check_curvatures(&curvatures)?;
        let (mu, lipschitz) = extremes(&curvatures);
        let dim = curvatures.len();
        let amp = c / (dim as f64).sqrt();
        Self::new(
            dim,
            lipschitz,
            mu,
            c,
            quadratic_gradient(curvatures),
            Arc::new(move |x, phase, out| {
                for ((o, xi), p) in out.iter_mut().zip(x).zip(phase) {
                    *o = amp * (xi + p).cos();
                }
            }),
        )
    }

    /// Replaces the declared `L` and `μ` without touching the dynamics.
    /// Used to build specs whose constants are wrong on purpose.
    pub fn with_declared(mut self, lipschitz: f64, mu: f64) -> Self {
        self.lipschitz = lipschitz;
        self.mu = mu;
        self
    }

    pub fn convex_gradient(&self, x: &[f64], out: &mut [f64]) {
        (self.convex)(x, out)
    }

    pub fn bounded_gradient(&self, x: &[f64], dataset: &[f64], out: &mut [f64]) {
        (self.bounded)(x, dataset, out)
    }

    /// `∇U_D(x)`. `scratch` must have length `dim`.
    pub fn gradient(&self, x: &[f64], dataset: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        (self.convex)(x, out);
        (self.bounded)(x, dataset, scratch);
        for (o, s) in out.iter_mut().zip(scratch.iter()) {
            *o += s;
        }
    }

    /// The declared constants with sampler settings, `β = 1`.
    pub fn drift_spec(&self, gamma: f64, n: u64) -> DriftSpec {
        DriftSpec::ula(self.c, self.lipschitz, self.mu, gamma, n)
    }
}

/// `dim` curvatures evenly spaced over `[μ, L]` (just `μ` when `dim = 1`).
pub fn spread_curvatures(dim: usize, mu: f64, lipschitz: f64) -> Vec<f64> {
    (0..dim)
        .map(|i| {
            if dim == 1 {
                mu
            } else {
                mu + (lipschitz - mu) * i as f64 / (dim - 1) as f64
            }
        })
        .collect()
}

/// Built-in potential families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialFamily {
    Gaussian,
    Sinusoidal,
}

impl PotentialFamily {
    /// A `dim`-dimensional member with curvatures spread evenly over
    /// `[μ, L]`.
    pub fn build(&self, dim: usize, mu: f64, lipschitz: f64, c: f64) -> Result<DecomposedPotential> {
        check_constants(dim, lipschitz, mu, c)?;
        let curvatures = spread_curvatures(dim, mu, lipschitz);
        let p = match self {
            PotentialFamily::Gaussian => DecomposedPotential::gaussian(curvatures, c)?,
            PotentialFamily::Sinusoidal => DecomposedPotential::sinusoidal(curvatures, c)?,
        };
        // Keep the requested L even when dim = 1 makes K flatter than L.
        Ok(p.with_declared(lipschitz, mu))
    }

    /// Adjacent datasets with opposite bounded gradients: slopes `±c·e₁`
    /// for the Gaussian family, phases `0` and `π` for the sinusoidal one.
    pub fn adjacent_pair(&self, dim: usize, c: f64) -> (Vec<f64>, Vec<f64>) {
        match self {
            PotentialFamily::Gaussian => {
                let mut a = vec![0.0; dim];
                let mut b = vec![0.0; dim];
                a[0] = c;
                b[0] = -c;
                (a, b)
            }
            PotentialFamily::Sinusoidal => (vec![0.0; dim], vec![std::f64::consts::PI; dim]),
        }
    }
}

/// Per-datum loss `ℓ(x, d) = v(x, d) + k(x)` over a dataset, for SGLD.
#[derive(Clone)]
pub struct LossSpec {
    pub dim: usize,
    pub data: Vec<Vec<f64>>,
    pub batch_size: usize,
    pub lipschitz: f64,
    pub mu: f64,
    pub c: f64,
    pub beta: f64,
    shared: Gradient,
    per_datum: DataGradient,
}

impl std::fmt::Debug for LossSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LossSpec")
            .field("dim", &self.dim)
            .field("m", &self.data.len())
            .field("batch_size", &self.batch_size)
            .field("lipschitz", &self.lipschitz)
            .field("mu", &self.mu)
            .field("c", &self.c)
            .field("beta", &self.beta)
            .finish_non_exhaustive()
    }
}

impl LossSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        dim: usize,
        data: Vec<Vec<f64>>,
        batch_size: usize,
        lipschitz: f64,
        mu: f64,
        c: f64,
        beta: f64,
        shared: Gradient,
        per_datum: DataGradient,
    ) -> Result<Self> {
        check_constants(dim, lipschitz, mu, c)?;
        ensure(beta > 0.0 && beta.is_finite(), || {
            format!("beta must be positive, got {beta}")
        })?;
        ensure(batch_size >= 1 && batch_size <= data.len(), || {
            format!("need 1 <= s <= m, got s={batch_size} m={}", data.len())
        })?;
        Ok(Self {
            dim,
            data,
            batch_size,
            lipschitz,
            mu,
            c,
            beta,
            shared,
            per_datum,
        })
    }

    /// `∇ₓv(x, d) = d` (constant in `x`) with `k(x) = Σ κᵢxᵢ²/2`. Each datum
    /// is a `dim`-vector of norm at most `c`.
    pub fn constant_gradient(
        curvatures: Vec<f64>,
        data: Vec<Vec<f64>>,
        batch_size: usize,
        c: f64,
        beta: f64,
    ) -> Result<Self> {
        check_curvatures(&curvatures)?;
        let dim = curvatures.len();
        for d in &data {
            ensure(d.len() == dim, || {
                format!("datum has length {}, expected {dim}", d.len())
            })?;
            ensure(norm(d) <= c, || format!("datum norm {} exceeds c = {c}", norm(d)))?;
        }
        let (mu, lipschitz) = extremes(&curvatures);
        Self::new(
            dim,
            data,
            batch_size,
            lipschitz,
            mu,
            c,
            beta,
            quadratic_gradient(curvatures),
            Arc::new(|_, d, out| out.copy_from_slice(d)),
        )
    }

    /// Ridge-regularized logistic regression. Each datum is `[y, a₁..a_d]`
    /// with label `y = ±1` and `|a| ≤ c`, so `|∇ₓv| = |a|σ(−y⟨a,x⟩) ≤ c`.
    pub fn logistic(curvatures: Vec<f64>, data: Vec<Vec<f64>>, batch_size: usize, beta: f64) -> Result<Self> {
        check_curvatures(&curvatures)?;
        let dim = curvatures.len();
        let mut c: f64 = 0.0;
        for d in &data {
            ensure(d.len() == dim + 1, || {
                format!("datum has length {}, expected label plus {dim} features", d.len())
            })?;
            ensure(d[0] == 1.0 || d[0] == -1.0, || {
                format!("label must be ±1, got {}", d[0])
            })?;
            c = c.max(norm(&d[1..]));
        }
        let (mu, lipschitz) = extremes(&curvatures);
        Self::new(
            dim,
            data,
            batch_size,
            lipschitz,
            mu,
            c,
            beta,
            quadratic_gradient(curvatures),
            Arc::new(|x, d, out| {
                let (y, a) = (d[0], &d[1..]);
                let margin = y * dot(a, x);
                // σ(−t) = 1/(1 + e^t)
                let w = -y / (1.0 + margin.exp());
                for (o, ai) in out.iter_mut().zip(a) {
                    *o = w * ai;
                }
            }),
        )
    }

    /// The same loss over a different dataset.
    pub fn with_data(&self, data: Vec<Vec<f64>>) -> Result<Self> {
        ensure(data.len() == self.data.len(), || {
            "adjacent datasets must have the same size".into()
        })?;
        Ok(Self { data, ..self.clone() })
    }

    pub fn shared_gradient(&self, x: &[f64], out: &mut [f64]) {
        (self.shared)(x, out)
    }

    pub fn datum_gradient(&self, x: &[f64], datum: &[f64], out: &mut [f64]) {
        (self.per_datum)(x, datum, out)
    }

    pub fn drift_spec(&self, gamma: f64, n: u64) -> DriftSpec {
        DriftSpec {
            c: self.c,
            lipschitz: self.lipschitz,
            mu: self.mu,
            gamma,
            beta: self.beta,
            s: self.batch_size as u64,
            m: self.data.len() as u64,
            n,
        }
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn check_finite(x: &[f64], step: usize) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric {
            step,
            detail: "chain state is not finite".into(),
        })
    }
}

/// Scratch buffers for stepping one chain.
struct Workspace {
    grad: Vec<f64>,
    tmp: Vec<f64>,
}

impl Workspace {
    fn new(dim: usize) -> Self {
        Self {
            grad: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }
}

fn ula_update(
    x: &mut [f64],
    potential: &DecomposedPotential,
    dataset: &[f64],
    gamma: f64,
    noise: &[f64],
    ws: &mut Workspace,
) {
    potential.gradient(x, dataset, &mut ws.grad, &mut ws.tmp);
    let scale = (2.0 * gamma).sqrt();
    for ((xi, g), z) in x.iter_mut().zip(&ws.grad).zip(noise) {
        *xi = *xi - gamma * g + scale * z;
    }
}

fn sgld_update(x: &mut [f64], loss: &LossSpec, batch: &[usize], gamma: f64, noise: &[f64], ws: &mut Workspace) {
    ws.grad.iter_mut().for_each(|g| *g = 0.0);
    for &i in batch {
        loss.datum_gradient(x, &loss.data[i], &mut ws.tmp);
        for (g, t) in ws.grad.iter_mut().zip(&ws.tmp) {
            *g += t;
        }
    }
    loss.shared_gradient(x, &mut ws.tmp);
    let s = batch.len() as f64;
    let scale = (2.0 * gamma / loss.beta).sqrt();
    for (((xi, g), k), z) in x.iter_mut().zip(&ws.grad).zip(&ws.tmp).zip(noise) {
        // (γ/s)Σ(∇v + ∇k) = (γ/s)Σ∇v + γ∇k
        *xi = *xi - gamma * (g / s + k) + scale * z;
    }
}

/// One ULA step `x − γ∇U_D(x) + √(2γ)·noise`.
pub fn ula_step(
    x: &[f64],
    potential: &DecomposedPotential,
    dataset: &[f64],
    gamma: f64,
    noise: &[f64],
) -> Result<Vec<f64>> {
    ensure(gamma > 0.0, || format!("step size must be positive, got {gamma}"))?;
    ensure(x.len() == potential.dim && noise.len() == potential.dim, || {
        "state and noise must match the potential's dimension".into()
    })?;
    let mut out = x.to_vec();
    ula_update(
        &mut out,
        potential,
        dataset,
        gamma,
        noise,
        &mut Workspace::new(potential.dim),
    );
    check_finite(&out, 0)?;
    Ok(out)
}

fn check_minibatch(loss: &LossSpec, batch: &[usize]) -> Result<()> {
    ensure(batch.len() == loss.batch_size, || {
        format!("minibatch has {} indices, expected {}", batch.len(), loss.batch_size)
    })?;
    let m = loss.data.len();
    ensure(batch.iter().all(|&i| i < m), || {
        format!("minibatch index out of range 0..{m}")
    })?;
    let mut sorted = batch.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    ensure(sorted.len() == batch.len(), || {
        "minibatch indices must be distinct".into()
    })
}

/// One SGLD step `x − (γ/s)Σ_{i∈batch}∇ₓℓ(x, dᵢ) + √(2γ/β)·noise`.
pub fn sgld_step(x: &[f64], loss: &LossSpec, minibatch: &[usize], gamma: f64, noise: &[f64]) -> Result<Vec<f64>> {
    ensure(gamma > 0.0, || format!("step size must be positive, got {gamma}"))?;
    ensure(x.len() == loss.dim && noise.len() == loss.dim, || {
        "state and noise must match the loss dimension".into()
    })?;
    check_minibatch(loss, minibatch)?;
    let mut out = x.to_vec();
    sgld_update(&mut out, loss, minibatch, gamma, noise, &mut Workspace::new(loss.dim));
    check_finite(&out, 0)?;
    Ok(out)
}

/// Uniform size-`s` subset of `0..m` by partial Fisher-Yates over `perm`,
/// returned in ascending order. `perm` must be a permutation of `0..m`; it
/// is left permuted, which keeps later draws uniform.
pub fn draw_minibatch<R: Rng + ?Sized>(rng: &mut R, perm: &mut [usize], s: usize, out: &mut Vec<usize>) {
    let m = perm.len();
    for i in 0..s {
        let j = rng.random_range(i..m);
        perm.swap(i, j);
    }
    out.clear();
    out.extend_from_slice(&perm[..s]);
    out.sort_unstable();
}

/// Two chains on adjacent datasets driven by common noise.
///
/// States are stored row-major: state `k` of chain A is
/// `states_a[k*dim..(k+1)*dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledPath {
    pub dim: usize,
    pub states_a: Vec<f64>,
    pub states_b: Vec<f64>,
    pub gaps: Vec<f64>,
    pub seed: u64,
    pub stream: u64,
    pub shared_noise: bool,
    /// For SGLD: whether the minibatch of step `k → k+1` contained an index
    /// where the datasets differ.
    pub batch_hits: Option<Vec<bool>>,
}

impl CoupledPath {
    /// Number of steps taken.
    pub fn steps(&self) -> usize {
        self.gaps.len() - 1
    }

    pub fn state_a(&self, k: usize) -> &[f64] {
        &self.states_a[k * self.dim..(k + 1) * self.dim]
    }

    pub fn state_b(&self, k: usize) -> &[f64] {
        &self.states_b[k * self.dim..(k + 1) * self.dim]
    }

    pub fn max_gap(&self) -> (usize, f64) {
        self.gaps
            .iter()
            .copied()
            .enumerate()
            .fold((0, 0.0), |best, (k, g)| if g > best.1 { (k, g) } else { best })
    }

    /// Writes `step, gap` rows, optionally followed by both chains'
    /// coordinates `a0.., b0..`.
    pub fn write_csv<W: Write>(&self, writer: W, with_states: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["step".to_string(), "gap".to_string()];
        if with_states {
            header.extend((0..self.dim).map(|i| format!("a{i}")));
            header.extend((0..self.dim).map(|i| format!("b{i}")));
        }
        w.write_record(&header)?;
        for (k, g) in self.gaps.iter().enumerate() {
            let mut row = vec![k.to_string(), g.to_string()];
            if with_states {
                row.extend(self.state_a(k).iter().map(f64::to_string));
                row.extend(self.state_b(k).iter().map(f64::to_string));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn start_path(dim: usize, x0: &[f64], n: usize, seed: u64, stream: u64) -> Result<CoupledPath> {
    ensure(x0.len() == dim, || {
        format!("x0 has length {}, expected {dim}", x0.len())
    })?;
    let mut states_a = Vec::with_capacity((n + 1) * dim);
    states_a.extend_from_slice(x0);
    let mut gaps = Vec::with_capacity(n + 1);
    gaps.push(0.0);
    Ok(CoupledPath {
        dim,
        states_b: states_a.clone(),
        states_a,
        gaps,
        seed,
        stream,
        shared_noise: true,
        batch_hits: None,
    })
}

fn record(path: &mut CoupledPath, xa: &[f64], xb: &[f64], step: usize) -> Result<()> {
    check_finite(xa, step)?;
    check_finite(xb, step)?;
    path.states_a.extend_from_slice(xa);
    path.states_b.extend_from_slice(xb);
    path.gaps.push(distance(xa, xb));
    Ok(())
}

/// Runs ULA on `dataset_a` and `dataset_b` from the common start `x0` for
/// `n` steps with shared noise from stream `stream` of `seed`.
#[allow(clippy::too_many_arguments)]
pub fn run_coupled_ula(
    potential: &DecomposedPotential,
    dataset_a: &[f64],
    dataset_b: &[f64],
    x0: &[f64],
    n: usize,
    gamma: f64,
    seed: u64,
    stream: u64,
) -> Result<CoupledPath> {
    ensure(gamma > 0.0, || format!("step size must be positive, got {gamma}"))?;
    let d = potential.dim;
    let mut path = start_path(d, x0, n, seed, stream)?;
    let mut rng = stream_rng(seed, stream);
    let (mut xa, mut xb) = (x0.to_vec(), x0.to_vec());
    let mut noise = vec![0.0; d];
    let mut ws = Workspace::new(d);
    for step in 1..=n {
        fill_standard_normal(&mut rng, &mut noise);
        ula_update(&mut xa, potential, dataset_a, gamma, &noise, &mut ws);
        ula_update(&mut xb, potential, dataset_b, gamma, &noise, &mut ws);
        record(&mut path, &xa, &xb, step)?;
    }
    Ok(path)
}

/// Runs SGLD on `loss.data` and `data_b` with shared noise and shared
/// minibatches.
#[allow(clippy::too_many_arguments)]
pub fn run_coupled_sgld(
    loss: &LossSpec,
    data_b: &[Vec<f64>],
    x0: &[f64],
    n: usize,
    gamma: f64,
    seed: u64,
    stream: u64,
) -> Result<CoupledPath> {
    ensure(gamma > 0.0, || format!("step size must be positive, got {gamma}"))?;
    let m = loss.data.len();
    ensure(data_b.len() == m, || "adjacent datasets must have the same size".into())?;
    let differs: Vec<bool> = loss.data.iter().zip(data_b).map(|(a, b)| a != b).collect();
    let loss_b = loss.with_data(data_b.to_vec())?;
    let d = loss.dim;
    let mut path = start_path(d, x0, n, seed, stream)?;
    let mut hits = Vec::with_capacity(n);
    let mut rng = stream_rng(seed, stream);
    let (mut xa, mut xb) = (x0.to_vec(), x0.to_vec());
    let mut noise = vec![0.0; d];
    let mut perm: Vec<usize> = (0..m).collect();
    let mut batch = Vec::with_capacity(loss.batch_size);
    let mut ws = Workspace::new(d);
    for step in 1..=n {
        draw_minibatch(&mut rng, &mut perm, loss.batch_size, &mut batch);
        fill_standard_normal(&mut rng, &mut noise);
        sgld_update(&mut xa, loss, &batch, gamma, &noise, &mut ws);
        sgld_update(&mut xb, &loss_b, &batch, gamma, &noise, &mut ws);
        hits.push(batch.iter().any(|&i| differs[i]));
        record(&mut path, &xa, &xb, step)?;
    }
    path.batch_hits = Some(hits);
    Ok(path)
}

/// Comparison of the observed gap against `2c/(μ − γL²/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContractionReport {
    pub max_gap: f64,
    pub argmax_step: usize,
    pub bound: f64,
    pub margin: f64,
    pub pass: bool,
}

/// Checks `max gap ≤ 2c/(μ − γL²/2)`. The bound is almost sure, so the
/// comparison is exact.
pub fn contraction_certificate(path: &CoupledPath, spec: &DriftSpec) -> ContractionReport {
    let (argmax_step, max_gap) = path.max_gap();
    let bound = spec.contraction_gap_bound();
    ContractionReport {
        max_gap,
        argmax_step,
        bound,
        margin: bound - max_gap,
        pass: max_gap <= bound,
    }
}

/// Result of checking a one-step gap recursion along a path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DominationReport {
    pub steps_checked: usize,
    pub violations: usize,
    pub first_violation: Option<usize>,
    /// Largest `e_{k+1} − (ρe_k + increment)` seen; negative when every
    /// step is dominated strictly.
    pub worst_excess: f64,
}

impl DominationReport {
    pub fn pass(&self) -> bool {
        self.violations == 0
    }
}

/// Rounding allowance for a recursion evaluated on stored states.
fn rounding_slack(path: &CoupledPath, k: usize) -> f64 {
    let scale =
        1.0 + norm(path.state_a(k)) + norm(path.state_b(k)) + norm(path.state_a(k + 1)) + norm(path.state_b(k + 1));
    1e-12 * scale
}

fn check_recursion(path: &CoupledPath, rho: f64, increment: impl Fn(usize) -> f64) -> DominationReport {
    let mut report = DominationReport {
        steps_checked: path.steps(),
        violations: 0,
        first_violation: None,
        worst_excess: f64::NEG_INFINITY,
    };
    for k in 0..path.steps() {
        let allowed = rho * path.gaps[k] + increment(k);
        let excess = path.gaps[k + 1] - allowed;
        report.worst_excess = report.worst_excess.max(excess);
        if excess > rounding_slack(path, k) {
            report.violations += 1;
            report.first_violation.get_or_insert(k + 1);
        }
    }
    report
}

/// Checks `e_{k+1} ≤ (1 − γμ + γ²L²/2)e_k + 2γc` at every step.
pub fn check_gap_domination(path: &CoupledPath, spec: &DriftSpec) -> DominationReport {
    let rho = spec.contraction_factor();
    check_recursion(path, rho, |_| 2.0 * spec.gamma * spec.c)
}

/// Checks the sharper SGLD recursion for per-datum gradients constant in
/// `x`: the increment is `2cγ/s` on steps whose minibatch contains the
/// differing datum and zero otherwise.
pub fn check_gap_domination_constant_grad(path: &CoupledPath, spec: &DriftSpec) -> Result<DominationReport> {
    let hits = path
        .batch_hits
        .as_ref()
        .ok_or_else(|| Error::Domain("path has no minibatch record; run it with SGLD".into()))?;
    let rho = spec.contraction_factor();
    let inc = 2.0 * spec.c * spec.gamma / spec.s as f64;
    Ok(check_recursion(path, rho, |k| if hits[k] { inc } else { 0.0 }))
}
