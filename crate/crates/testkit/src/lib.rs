//! Reference implementations used only by tests. Nothing here shares code
//! with the library under test.

use statrs::function::beta::ln_beta;

// 15-point Kronrod nodes/weights with the embedded 7-point Gauss weights.
const XK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XK[i];
        let pair = f(c - dx) + f(c + dx);
        k += WK[i] * pair;
        if i % 2 == 1 {
            g += WG[i / 2] * pair;
        }
    }
    (k * h, ((k - g) * h).abs())
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (v, err) = kronrod(f, a, b);
    if err <= tol || depth == 0 || b - a < 1e-15 {
        return v;
    }
    let m = 0.5 * (a + b);
    adapt(f, a, m, 0.5 * tol, depth - 1) + adapt(f, m, b, 0.5 * tol, depth - 1)
}

/// Adaptive Gauss-Kronrod (7/15) integration of `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    adapt(&f, a, b, tol, 60)
}

/// Beta density from its textbook formula.
pub fn beta_pdf(alpha: f64, beta: f64, s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        return 0.0;
    }
    ((alpha - 1.0) * s.ln() + (beta - 1.0) * (-s).ln_1p() - ln_beta(alpha, beta)).exp()
}

/// `∫_lo^hi s^power · Beta(α, β)(s) ds` by quadrature. Singular endpoints
/// (`α < 1` or `β < 1`) are removed with `s = u^(1/α)` / `1 - s = v^(1/β)`.
pub fn beta_moment_integral(alpha: f64, beta: f64, lo: f64, hi: f64, power: i32) -> f64 {
    let lo = lo.clamp(0.0, 1.0);
    let hi = hi.clamp(0.0, 1.0);
    if hi <= lo {
        return 0.0;
    }
    let lb = ln_beta(alpha, beta);
    let tol = 1e-13;
    let mid = 0.5;
    let mut total = 0.0;

    // lower half
    let (a, b) = (lo, hi.min(mid));
    if b > a {
        total += if alpha < 1.0 {
            let f = |u: f64| {
                let s = u.powf(1.0 / alpha);
                ((beta - 1.0) * (-s).ln_1p() - lb).exp() / alpha * s.powi(power)
            };
            integrate(f, a.powf(alpha), b.powf(alpha), tol)
        } else {
            integrate(|s| beta_pdf(alpha, beta, s) * s.powi(power), a, b, tol)
        };
    }
    // upper half
    let (a, b) = (lo.max(mid), hi);
    if b > a {
        total += if beta < 1.0 {
            let f = |v: f64| {
                let t = v.powf(1.0 / beta);
                let s = 1.0 - t;
                ((alpha - 1.0) * s.ln() - lb).exp() / beta * s.powi(power)
            };
            integrate(f, (1.0 - b).powf(beta), (1.0 - a).powf(beta), tol)
        } else {
            integrate(|s| beta_pdf(alpha, beta, s) * s.powi(power), a, b, tol)
        };
    }
    total
}

pub fn beta_cdf(alpha: f64, beta: f64, x: f64) -> f64 {
    beta_moment_integral(alpha, beta, 0.0, x, 0)
}

/// Hard-membership bin statistics for scalar scores on `m` equal-width
/// bins `[i/m, (i+1)/m)`, last bin closed. Returns `(r, g, p)` per bin with
/// `None` for empty bins.
pub fn classic_bins(scores: &[f64], targets: &[f64], m: usize) -> Vec<(Option<f64>, Option<f64>, f64)> {
    let mut n = vec![0usize; m];
    let mut ys = vec![0.0; m];
    let mut ss = vec![0.0; m];
    for (&s, &y) in scores.iter().zip(targets) {
        let mut i = 0;
        while i + 1 < m && s >= (i + 1) as f64 / m as f64 {
            i += 1;
        }
        n[i] += 1;
        ys[i] += y;
        ss[i] += s;
    }
    (0..m)
        .map(|i| {
            if n[i] == 0 {
                (None, None, 0.0)
            } else {
                let c = n[i] as f64;
                (Some(ys[i] / c), Some(ss[i] / c), c / scores.len() as f64)
            }
        })
        .collect()
}

/// Classic ECE from hard-membership bins.
pub fn classic_ece(scores: &[f64], targets: &[f64], m: usize) -> f64 {
    classic_bins(scores, targets, m)
        .into_iter()
        .filter_map(|(r, g, p)| Some(p * (r? - g?).abs()))
        .sum()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Cheapest assignment of rows to columns of a square cost matrix, by
/// enumerating every permutation. Returns `(perm, total)` with row `i`
/// assigned column `perm[i]`.
pub fn brute_force_assignment(cost: &[Vec<f64>]) -> (Vec<usize>, f64) {
    permutations(cost.len())
        .into_iter()
        .map(|p| {
            let c = p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>();
            (p, c)
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one permutation")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        // Beta(2,2) cdf = 3x^2 - 2x^3
        for x in [0.1, 0.37, 0.5, 0.9] {
            assert!((beta_cdf(2.0, 2.0, x) - (3.0 * x * x - 2.0 * x * x * x)).abs() < 1e-13);
        }
        // Beta(0.5,0.5) is the arcsine law
        for x in [0.01f64, 0.3, 0.8, 0.999] {
            let exact = 2.0 / std::f64::consts::PI * x.sqrt().asin();
            assert!((beta_cdf(0.5, 0.5, x) - exact).abs() < 1e-11, "{x}");
        }
        assert!((beta_moment_integral(3.0, 5.0, 0.0, 1.0, 1) - 3.0 / 8.0).abs() < 1e-13);
    }

    #[test]
    fn assignment() {
        let c = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
        let (p, v) = brute_force_assignment(&c);
        assert_eq!(p, vec![1, 0, 2]);
        assert_eq!(v, 5.0);
        assert_eq!(permutations(4).len(), 24);
    }

    #[test]
    fn classic_binning_edges() {
        let b = classic_bins(&[0.0, 0.5, 1.0], &[0.0, 1.0, 1.0], 2);
        assert_eq!(b[0], (Some(0.0), Some(0.0), 1.0 / 3.0));
        assert_eq!(b[1].2, 2.0 / 3.0);
    }
}
