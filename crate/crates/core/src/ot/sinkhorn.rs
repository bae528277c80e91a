use serde::{Deserialize, Serialize};

use super::cost::{check_simplex, CostMatrix};
use crate::error::{Error, Result};
use crate::scalar::{compensated_sum, Scalar};

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct OtConfig<T: Scalar> {
    /// Entropy weight.
    pub epsilon: T,
    /// KL penalty on the source marginal. Large means effectively hard.
    pub tau1: T,
    /// KL penalty on the target marginal.
    pub tau2: T,
    pub max_iterations: usize,
    /// Sup-norm change of the dual potentials that counts as converged.
    pub tolerance: T,
    pub seed: u64,
}

impl<T: Scalar> Default for OtConfig<T> {
    fn default() -> Self {
        Self {
            epsilon: T::lit(1e-3),
            tau1: T::lit(1e4),
            tau2: T::lit(1e-3),
            max_iterations: 10_000,
            tolerance: T::lit(1e-9),
            seed: 0,
        }
    }
}

impl<T: Scalar> OtConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = |x: T| x > T::zero() && x.is_finite();
        if !positive(self.epsilon) {
            return Err(Error::InvalidConfig(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !positive(self.tau1) || !positive(self.tau2) {
            return Err(Error::InvalidConfig(format!(
                "marginal penalties must be positive, got tau1={} tau2={}",
                self.tau1, self.tau2
            )));
        }
        if !positive(self.tolerance) {
            return Err(Error::InvalidConfig("tolerance must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// Output of a transport solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TransportPlan<T: Scalar> {
    /// `K x L`, nonnegative.
    pub values: Vec<Vec<T>>,
    pub converged: bool,
    pub iterations: usize,
    /// Primal objective at the returned plan.
    pub objective: T,
    /// Negated dual objective after each sweep. Nonincreasing.
    pub trace: Vec<T>,
}

impl<T: Scalar> TransportPlan<T> {
    pub fn row_sums(&self) -> Vec<T> {
        self.values.iter().map(|r| compensated_sum(r.iter().copied())).collect()
    }

    pub fn col_sums(&self) -> Vec<T> {
        let l = self.values.first().map_or(0, Vec::len);
        (0..l)
            .map(|j| compensated_sum(self.values.iter().map(|r| r[j])))
            .collect()
    }

    pub fn total_mass(&self) -> T {
        compensated_sum(self.values.iter().flatten().copied())
    }

    /// Half the L1 distance between two plans of the same shape.
    pub fn total_variation(&self, other: &Self) -> T {
        let d = self
            .values
            .iter()
            .flatten()
            .zip(other.values.iter().flatten())
            .map(|(x, y)| (*x - *y).abs());
        compensated_sum(d) * T::half()
    }
}

/// Entropic transport with both marginals enforced: rows sum to the
/// cost matrix's source weights, columns to `b`.
pub fn solve_balanced<T: Scalar>(cost: &CostMatrix<T>, b: &[T], config: &OtConfig<T>) -> Result<TransportPlan<T>> {
    config.validate()?;
    check_simplex(b, cost.cols(), "target weights")?;
    run(cost, &cost.source_weights, b, Penalty::Hard, config)
}

/// Entropic transport with KL-penalized marginals.
///
/// The target reference is the cost matrix's `target_weights` when set,
/// otherwise the source weights when the phrase sets have the same size,
/// otherwise uniform.
pub fn solve_unbalanced<T: Scalar>(cost: &CostMatrix<T>, config: &OtConfig<T>) -> Result<TransportPlan<T>> {
    config.validate()?;
    let b = match &cost.target_weights {
        Some(b) => b.clone(),
        None if cost.cols() == cost.rows() => cost.source_weights.clone(),
        None => vec![T::one() / T::from_usize_lossy(cost.cols()); cost.cols()],
    };
    let penalty = Penalty::Soft {
        tau1: config.tau1,
        tau2: config.tau2,
    };
    run(cost, &cost.source_weights, &b, penalty, config)
}

#[derive(Clone, Copy)]
enum Penalty<T> {
    Hard,
    Soft { tau1: T, tau2: T },
}

impl<T: Scalar> Penalty<T> {
    /// Exponent damping `tau / (tau + eps)` for each side.
    fn damping(self, eps: T) -> (T, T) {
        match self {
            Penalty::Hard => (T::one(), T::one()),
            Penalty::Soft { tau1, tau2 } => (tau1 / (tau1 + eps), tau2 / (tau2 + eps)),
        }
    }

    fn taus(self) -> (Option<T>, Option<T>) {
        match self {
            Penalty::Hard => (None, None),
            Penalty::Soft { tau1, tau2 } => (Some(tau1), Some(tau2)),
        }
    }
}

fn log_sum_exp<T: Scalar>(xs: impl Iterator<Item = T> + Clone) -> T {
    let m = xs.clone().fold(T::neg_infinity(), T::max);
    if m == T::neg_infinity() {
        return m;
    }
    m + compensated_sum(xs.map(|x| (x - m).exp())).ln()
}

/// Dual contribution of one marginal: `<w, f>` when hard, the conjugate of
/// `tau * KL(. | w)` when soft.
fn marginal_dual<T: Scalar>(w: &[T], pot: &[T], idx: &[usize], tau: Option<T>) -> T {
    compensated_sum(idx.iter().map(|&i| match tau {
        None => w[i] * pot[i],
        Some(tau) => -tau * w[i] * (-pot[i] / tau).exp_m1(),
    }))
}

fn kl<T: Scalar>(x: &[T], y: &[T]) -> T {
    compensated_sum(x.iter().zip(y).map(|(&x, &y)| {
        if x > T::zero() {
            x * (x / y).ln() - x + y
        } else {
            y
        }
    }))
}

fn run<T: Scalar>(
    cost: &CostMatrix<T>,
    a: &[T],
    b: &[T],
    penalty: Penalty<T>,
    config: &OtConfig<T>,
) -> Result<TransportPlan<T>> {
    let c = &cost.values;
    let (k_n, l_n) = (cost.rows(), cost.cols());
    let eps = config.epsilon;
    let (fi1, fi2) = penalty.damping(eps);
    let (tau1, tau2) = penalty.taus();

    let rows: Vec<usize> = (0..k_n).filter(|&k| a[k] > T::zero()).collect();
    let cols: Vec<usize> = (0..l_n).filter(|&l| b[l] > T::zero()).collect();
    if rows.is_empty() || cols.is_empty() {
        return Err(Error::InvalidConfig("transport problem has no mass".into()));
    }
    let log_a: Vec<T> = a.iter().map(|x| x.ln()).collect();
    let log_b: Vec<T> = b.iter().map(|x| x.ln()).collect();

    let mut f = vec![T::zero(); k_n];
    let mut g = vec![T::zero(); l_n];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iterations {
        iterations += 1;
        let mut delta = T::zero();
        for &k in &rows {
            let lse = log_sum_exp(cols.iter().map(|&l| (g[l] - c[k][l]) / eps));
            let next = fi1 * (eps * log_a[k] - eps * lse);
            delta = delta.max((next - f[k]).abs());
            f[k] = next;
        }
        for &l in &cols {
            let lse = log_sum_exp(rows.iter().map(|&k| (f[k] - c[k][l]) / eps));
            let next = fi2 * (eps * log_b[l] - eps * lse);
            delta = delta.max((next - g[l]).abs());
            g[l] = next;
        }
        if !delta.is_finite() {
            return Err(overflow(&f, &g, iterations));
        }

        let coupling = compensated_sum(
            rows.iter()
                .flat_map(|&k| cols.iter().map(move |&l| (k, l)))
                .map(|(k, l)| ((f[k] + g[l] - c[k][l]) / eps).exp()),
        );
        let dual = marginal_dual(a, &f, &rows, tau1) + marginal_dual(b, &g, &cols, tau2) - eps * coupling;
        if !dual.is_finite() {
            return Err(overflow(&f, &g, iterations));
        }
        trace.push(-dual);

        if delta < config.tolerance {
            converged = true;
            break;
        }
    }

    let mut values = vec![vec![T::zero(); l_n]; k_n];
    for &k in &rows {
        for &l in &cols {
            values[k][l] = ((f[k] + g[l] - c[k][l]) / eps).exp();
        }
    }
    let mut plan = TransportPlan {
        values,
        converged,
        iterations,
        objective: T::zero(),
        trace,
    };

    let transport = compensated_sum(
        plan.values
            .iter()
            .zip(c)
            .flat_map(|(t, c)| t.iter().zip(c).map(|(t, c)| *t * *c)),
    );
    let entropy = compensated_sum(
        plan.values
            .iter()
            .flatten()
            .filter(|t| **t > T::zero())
            .map(|&t| t * (t.ln() - T::one())),
    );
    let mut objective = transport + eps * entropy;
    if let (Some(t1), Some(t2)) = (tau1, tau2) {
        objective += t1 * kl(&plan.row_sums(), a) + t2 * kl(&plan.col_sums(), b);
    }
    plan.objective = objective;
    Ok(plan)
}

fn overflow<T: Scalar>(f: &[T], g: &[T], iteration: usize) -> Error {
    let worst = |v: &[T]| {
        v.iter()
            .enumerate()
            .find(|(_, x)| !x.is_finite())
            .map(|(i, x)| format!("{i}={x}"))
            .unwrap_or_else(|| "finite".into())
    };
    Error::NumericalOverflow(format!(
        "non-finite dual potential at sweep {iteration} (source {}, target {})",
        worst(f),
        worst(g)
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(n: usize) -> Vec<f64> {
        vec![1.0 / n as f64; n]
    }

    #[test]
    fn single_cell() {
        let c = CostMatrix::<f64>::new(vec![vec![0.3]], vec![1.0]).unwrap();
        let p = solve_balanced(&c, &[1.0], &OtConfig::default()).unwrap();
        assert!((p.values[0][0] - 1.0).abs() < 1e-12);
        assert!(p.converged);
    }

    #[test]
    fn zero_cost_gives_product_plan() {
        let a = vec![0.2, 0.3, 0.5];
        let b = vec![0.6, 0.4];
        let c = CostMatrix::<f64>::new(vec![vec![0.0; 2]; 3], a.clone()).unwrap();
        let p = solve_balanced(&c, &b, &OtConfig::default()).unwrap();
        for k in 0..3 {
            for l in 0..2 {
                assert!((p.values[k][l] - a[k] * b[l]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn low_epsilon_concentrates_on_assignment() {
        let c = CostMatrix::<f64>::new(
            vec![vec![0.9, 0.1, 0.5], vec![0.2, 0.8, 0.7], vec![0.6, 0.4, 0.0]],
            uniform(3),
        )
        .unwrap();
        let p = solve_balanced(&c, &uniform(3), &OtConfig::default()).unwrap();
        assert!(p.converged);
        for (k, l) in [(0, 1), (1, 0), (2, 2)] {
            assert!((p.values[k][l] - 1.0 / 3.0).abs() < 1e-6);
        }
    }

    #[test]
    fn trace_is_monotone() {
        let c = CostMatrix::<f64>::new(
            vec![vec![0.0, -0.4, 0.3], vec![0.2, 0.0, -0.1], vec![0.5, 0.1, 0.0]],
            vec![0.5, 0.3, 0.2],
        )
        .unwrap();
        for tau2 in [1e-3, 1e-1, 1.0, 1e3] {
            let cfg = OtConfig { tau2, ..OtConfig::default() };
            let p = solve_unbalanced(&c, &cfg).unwrap();
            for w in p.trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "{} > {}", w[1], w[0]);
            }
        }
    }

    #[test]
    fn unbalanced_zero_cost_keeps_rows() {
        let a = vec![0.1, 0.6, 0.3];
        let c = CostMatrix::<f64>::new(vec![vec![0.0; 3]; 3], a.clone()).unwrap();
        let p = solve_unbalanced(&c, &OtConfig::default()).unwrap();
        let rows = p.row_sums();
        let dev: f64 = rows.iter().zip(&a).map(|(r, a)| (r - a).abs()).sum();
        assert!(dev < 1e-6, "{dev}");
    }

    #[test]
    fn excluded_rows_and_columns_get_nothing() {
        let c = CostMatrix::<f64>::new(vec![vec![0.0, 0.1], vec![0.1, 0.0]], vec![1.0, 0.0]).unwrap();
        let p = solve_balanced(&c, &[0.0, 1.0], &OtConfig::default()).unwrap();
        assert_eq!(p.values[1], vec![0.0, 0.0]);
        assert_eq!(p.values[0][0], 0.0);
        assert!((p.values[0][1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_config() {
        let c = CostMatrix::<f64>::new(vec![vec![0.0]], vec![1.0]).unwrap();
        let cfg = OtConfig { epsilon: 0.0, ..OtConfig::default() };
        assert!(matches!(solve_unbalanced(&c, &cfg), Err(Error::InvalidConfig(_))));
        assert!(solve_balanced(&c, &[0.5], &OtConfig::default()).is_err());
    }

    #[test]
    fn extreme_costs_stay_finite() {
        let c = CostMatrix::<f64>::new(vec![vec![-50.0, 80.0], vec![120.0, -90.0]], vec![0.5, 0.5]).unwrap();
        let p = solve_unbalanced(&c, &OtConfig::default()).unwrap();
        assert!(p.values.iter().flatten().all(|x| x.is_finite()));
    }

    #[test]
    fn runs_in_single_precision() {
        let c = CostMatrix::<f32>::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![0.5, 0.5]).unwrap();
        let cfg = OtConfig { epsilon: 0.05, tolerance: 1e-5, ..OtConfig::default() };
        let p = solve_balanced(&c, &[0.5, 0.5], &cfg).unwrap();
        assert!((p.values[0][0] - 0.5).abs() < 1e-3);
    }
}
