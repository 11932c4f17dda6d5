//! Box-constrained Nelder–Mead simplex search.

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_iters: usize,
    /// Stop once `f_max - f_min <= tol_cost * max(1, |f_min|)` over the simplex.
    pub tol_cost: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            tol_cost: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iters: usize,
    pub evals: usize,
    pub converged: bool,
}

fn clamp_into(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(*lo, *hi);
    }
}

/// Minimizes `f` from `x0` with initial edge lengths `step`; every trial point is
/// projected onto `[lower, upper]`. Non-finite values are treated as `+∞`.
pub fn nelder_mead(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    step: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: NelderMeadOptions,
) -> NelderMeadResult {
    let dim = x0.len();
    assert!(step.len() == dim && lower.len() == dim && upper.len() == dim);
    let mut evals = 0usize;
    let mut eval = |x: &[f64]| {
        evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    let mut start = x0.to_vec();
    clamp_into(&mut start, lower, upper);
    simplex.push(start.clone());
    for i in 0..dim {
        let mut v = start.clone();
        v[i] += step[i];
        if v[i] > upper[i] {
            v[i] = start[i] - step[i];
        }
        clamp_into(&mut v, lower, upper);
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| eval(x)).collect();

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut iters = 0;
    let mut converged = false;
    let mut order: Vec<usize> = (0..=dim).collect();
    while iters < opts.max_iters {
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let best = values[order[0]];
        let worst = values[order[dim]];
        if best.is_finite() && worst - best <= opts.tol_cost * best.abs().max(1.0) {
            converged = true;
            break;
        }
        iters += 1;

        let mut centroid = vec![0.0; dim];
        for &k in &order[..dim] {
            for (c, v) in centroid.iter_mut().zip(&simplex[k]) {
                *c += v / dim as f64;
            }
        }
        let w = order[dim];
        let toward = |t: f64, from: &[f64]| -> Vec<f64> {
            let mut p: Vec<f64> = centroid
                .iter()
                .zip(from)
                .map(|(c, x)| c + t * (x - c))
                .collect();
            clamp_into(&mut p, lower, upper);
            p
        };

        let xr = toward(-alpha, &simplex[w]);
        let fr = eval(&xr);
        let second_worst = values[order[dim - 1]];
        if fr < best {
            let xe = toward(-gamma, &simplex[w]);
            let fe = eval(&xe);
            if fe < fr {
                simplex[w] = xe;
                values[w] = fe;
            } else {
                simplex[w] = xr;
                values[w] = fr;
            }
            continue;
        }
        if fr < second_worst {
            simplex[w] = xr;
            values[w] = fr;
            continue;
        }
        let (xc, fc) = if fr < worst {
            let xc = toward(-rho, &simplex[w]);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = toward(rho, &simplex[w]);
            let fc = eval(&xc);
            (xc, fc)
        };
        if fc < fr.min(worst) {
            simplex[w] = xc;
            values[w] = fc;
            continue;
        }
        let keep = simplex[order[0]].clone();
        for &k in &order[1..] {
            let mut p: Vec<f64> = keep
                .iter()
                .zip(&simplex[k])
                .map(|(b, x)| b + sigma * (x - b))
                .collect();
            clamp_into(&mut p, lower, upper);
            values[k] = eval(&p);
            simplex[k] = p;
        }
    }
    let k = (0..=dim)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap();
    NelderMeadResult {
        x: simplex[k].clone(),
        f: values[k],
        iters,
        evals,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_rosenbrock_minimum() {
        let r = nelder_mead(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            &[-1.2, 1.0],
            &[0.5, 0.5],
            &[-5.0, -5.0],
            &[5.0, 5.0],
            NelderMeadOptions {
                max_iters: 5000,
                tol_cost: 1e-14,
            },
        );
        assert!(r.converged);
        assert!(
            (r.x[0] - 1.0).abs() < 1e-3 && (r.x[1] - 1.0).abs() < 1e-3,
            "{:?}",
            r.x
        );
    }

    #[test]
    fn respects_bounds() {
        let r = nelder_mead(
            |x| (x[0] + 3.0).powi(2),
            &[0.5],
            &[0.2],
            &[0.0],
            &[1.0],
            NelderMeadOptions::default(),
        );
        assert!(r.x[0] >= 0.0 && r.x[0] < 1e-4);
    }

    #[test]
    fn infinite_values_are_avoided() {
        let r = nelder_mead(
            |x| {
                if x[0] < 0.0 {
                    f64::NAN
                } else {
                    (x[0] - 1.0).powi(2)
                }
            },
            &[0.2],
            &[1.0],
            &[-2.0],
            &[2.0],
            NelderMeadOptions::default(),
        );
        assert!((r.x[0] - 1.0).abs() < 1e-2);
    }
}
