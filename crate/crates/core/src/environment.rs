//! The mixing measure `nu` over environments `u`: log-density evaluation,
//! quadrature integrals, change of root, and adaptive random-walk Metropolis
//! sampling.

use crate::graph::{tree_determinant_at, GraphError, WeightedGraph};
use crate::quad::{gauss_legendre_on, TensorRule};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("non-finite density at u = {0:?}")]
    NonFiniteDensity(Vec<f64>),
}

/// A rooted environment: one real per vertex with `u[root] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    pub u: Vec<f64>,
    pub root: usize,
}

impl Environment {
    pub fn new(u: Vec<f64>, root: usize) -> Self {
        assert!(root < u.len() && u[root] == 0.0);
        assert!(u.iter().all(|x| x.is_finite()));
        Self { u, root }
    }

    pub fn zero(n: usize, root: usize) -> Self {
        Self::new(vec![0.0; n], root)
    }
}

/// Re-roots an environment: `v_i = u_i - u_b` with the new root `b`.
pub fn change_root_transform(env: &Environment, new_root: usize) -> Environment {
    let shift = env.u[new_root];
    let mut u: Vec<f64> = env.u.iter().map(|x| x - shift).collect();
    u[new_root] = 0.0;
    Environment::new(u, new_root)
}

/// Log-density of `nu` with initial local times `z`, with respect to
/// `prod_{i != root} du_i`:
///
/// `-1/2 sum_{i<j} W_ij (z_j^2 e^{u_i-u_j} + z_i^2 e^{u_j-u_i} - 2 z_i z_j)
///  + 1/2 log D(W,u) + sum_{i != root} (log z_i - u_i - 1/2 log 2 pi)`.
pub fn nu_log_density(
    g: &WeightedGraph,
    z: &[f64],
    root: usize,
    u: &[f64],
) -> Result<f64, EnvError> {
    assert!(z.iter().all(|&x| x > 0.0));
    let mut log_rho = 0.0;
    for (i, j, w) in g.edges() {
        let e = (u[i] - u[j]).exp();
        log_rho -= 0.5 * w * (z[j] * z[j] * e + z[i] * z[i] / e - 2.0 * z[i] * z[j]);
    }
    let d = tree_determinant_at(g, u, root)?;
    log_rho += 0.5 * d.ln();
    for i in 0..g.n() {
        if i != root {
            log_rho += z[i].ln() - u[i] - 0.5 * (2.0 * std::f64::consts::PI).ln();
        }
    }
    if !log_rho.is_finite() {
        return Err(EnvError::NonFiniteDensity(u.to_vec()));
    }
    Ok(log_rho)
}

/// Quadrature of `f(u) nu(du)` over the `n - 1` free coordinates, each on
/// `[-half_width, half_width]` (the density decays doubly-exponentially, so a
/// moderate box is exact to machine precision).
pub fn nu_integrate(
    g: &WeightedGraph,
    z: &[f64],
    root: usize,
    nodes: usize,
    half_width: f64,
    mut f: impl FnMut(&[f64]) -> f64,
) -> Result<f64, EnvError> {
    let free: Vec<usize> = (0..g.n()).filter(|&v| v != root).collect();
    let rule = TensorRule::uniform(gauss_legendre_on(nodes, -half_width, half_width), free.len());
    let mut sum = 0.0;
    let mut err = None;
    let mut u = vec![0.0; g.n()];
    rule.for_each(|coords, w| {
        if err.is_some() {
            return;
        }
        for (k, &v) in free.iter().enumerate() {
            u[v] = coords[k];
        }
        match nu_log_density(g, z, root, &u) {
            Ok(lr) => sum += w * lr.exp() * f(&u),
            Err(e) => err = Some(e),
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(sum),
    }
}

/// Random-walk Metropolis configuration.
#[derive(Debug, Clone)]
pub struct MCMCConfig {
    /// Initial per-coordinate proposal standard deviation; adapted during
    /// burn-in towards ~0.4 acceptance.
    pub step: f64,
    pub burn_in: usize,
    pub thin: usize,
}

impl Default for MCMCConfig {
    fn default() -> Self {
        Self {
            step: 0.5,
            burn_in: 2_000,
            thin: 3,
        }
    }
}

/// Sampler diagnostics; acceptance far outside `[0.1, 0.7]` indicates poor
/// mixing but is not an error.
#[derive(Debug, Clone, Copy)]
pub struct SampleDiagnostics {
    pub acceptance: f64,
    pub final_step: f64,
}

/// Adaptive random-walk Metropolis chain targeting `nu`.
pub fn nu_sample(
    g: &WeightedGraph,
    z: &[f64],
    root: usize,
    cfg: &MCMCConfig,
    count: usize,
    rng: &mut impl Rng,
) -> Result<(Vec<Environment>, SampleDiagnostics), EnvError> {
    let n = g.n();
    let free: Vec<usize> = (0..n).filter(|&v| v != root).collect();
    if free.is_empty() {
        return Ok((
            vec![Environment::zero(n, root); count],
            SampleDiagnostics {
                acceptance: 1.0,
                final_step: cfg.step,
            },
        ));
    }
    let mut u = vec![0.0; n];
    let mut log_rho = nu_log_density(g, z, root, &u)?;
    let mut step = cfg.step;
    let mut samples = Vec::with_capacity(count);
    let total = cfg.burn_in + cfg.thin * count;
    let mut accepted = 0usize;
    let mut batch_accepted = 0usize;
    const BATCH: usize = 100;
    for it in 0..total {
        let mut proposal = u.clone();
        for &v in &free {
            let n01: f64 = StandardNormal.sample(rng);
            proposal[v] += step * n01;
        }
        let log_rho_new = nu_log_density(g, z, root, &proposal)?;
        if (log_rho_new - log_rho) >= rng.gen_range(0.0f64..1.0).ln() {
            u = proposal;
            log_rho = log_rho_new;
            accepted += 1;
            batch_accepted += 1;
        }
        if it < cfg.burn_in && (it + 1) % BATCH == 0 {
            let rate = batch_accepted as f64 / BATCH as f64;
            step *= (rate - 0.4).exp();
            batch_accepted = 0;
        }
        if it >= cfg.burn_in && (it - cfg.burn_in) % cfg.thin == 0 && samples.len() < count {
            samples.push(Environment::new(u.clone(), root));
        }
    }
    let acceptance = accepted as f64 / total as f64;
    if !(0.1..=0.7).contains(&acceptance) {
        eprintln!("warning: Metropolis acceptance rate {acceptance:.3} outside [0.1, 0.7]");
    }
    Ok((
        samples,
        SampleDiagnostics {
            acceptance,
            final_step: step,
        },
    ))
}

/// One row per sample, one column per vertex.
pub fn samples_to_csv(samples: &[Environment]) -> String {
    let mut out = String::new();
    if let Some(first) = samples.first() {
        let header: Vec<String> = (0..first.u.len()).map(|v| format!("u{v}")).collect();
        out.push_str(&header.join(","));
        out.push('\n');
    }
    for s in samples {
        let row: Vec<String> = s.u.iter().map(|x| format!("{x}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Mean and batch-means standard error (robust to chain autocorrelation).
pub fn batch_mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let batch = (n as f64).sqrt() as usize;
    let k = n / batch;
    let mut var = 0.0;
    for b in 0..k {
        let m = values[b * batch..(b + 1) * batch].iter().sum::<f64>() / batch as f64;
        var += (m - mean) * (m - mean);
    }
    var /= (k * (k - 1).max(1)) as f64;
    (mean, var.sqrt())
}
