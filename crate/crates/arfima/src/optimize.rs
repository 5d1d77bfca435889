//! Derivative-free simplex minimisation (Nelder-Mead). Box constraints are
//! handled by the caller returning `f64::INFINITY` outside the feasible set;
//! reflections then pull the simplex back inside.

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_iter: usize,
    /// convergence: max pairwise vertex distance below this ...
    pub x_tol: f64,
    /// ... and best-to-worst objective spread below this
    pub f_tol: f64,
    /// initial simplex edge length
    pub step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions { max_iter: 2000, x_tol: 1e-6, f_tol: 1e-10, step: 0.1 }
    }
}

#[derive(Debug, Clone)]
pub struct OptimOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    opts: &NelderMeadOptions,
) -> OptimOutcome {
    let dim = x0.len();
    assert!(dim >= 1);
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    simplex.push(x0.to_vec());
    for i in 0..dim {
        let mut v = x0.to_vec();
        v[i] += opts.step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        // order best..worst
        let mut idx: Vec<usize> = (0..=dim).collect();
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let reordered: Vec<Vec<f64>> = idx.iter().map(|&i| simplex[i].clone()).collect();
        let revalues: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
        simplex = reordered;
        values = revalues;

        let diam = simplex_diameter(&simplex);
        let spread = values[dim] - values[0];
        if diam < opts.x_tol && spread.abs() < opts.f_tol && values[dim].is_finite() {
            converged = true;
            break;
        }

        // centroid of all but worst
        let mut centroid = vec![0.0; dim];
        for v in &simplex[..dim] {
            for (c, &x) in centroid.iter_mut().zip(v) {
                *c += x;
            }
        }
        for c in centroid.iter_mut() {
            *c /= dim as f64;
        }

        let blend = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[dim])
                .map(|(&c, &w)| c + t * (c - w))
                .collect()
        };

        let xr = blend(alpha);
        let fr = f(&xr);
        if fr < values[0] {
            let xe = blend(gamma);
            let fe = f(&xe);
            if fe < fr {
                simplex[dim] = xe;
                values[dim] = fe;
            } else {
                simplex[dim] = xr;
                values[dim] = fr;
            }
        } else if fr < values[dim - 1] {
            simplex[dim] = xr;
            values[dim] = fr;
        } else {
            let (xc, fc) = if fr < values[dim] {
                let x = blend(rho);
                let v = f(&x);
                (x, v)
            } else {
                let x = blend(-rho);
                let v = f(&x);
                (x, v)
            };
            if fc < values[dim].min(fr) {
                simplex[dim] = xc;
                values[dim] = fc;
            } else {
                // shrink toward the best vertex
                for i in 1..=dim {
                    let best = simplex[0].clone();
                    for (x, &b) in simplex[i].iter_mut().zip(&best) {
                        *x = b + sigma * (*x - b);
                    }
                    values[i] = f(&simplex[i]);
                }
            }
        }
    }

    let mut best = 0;
    for i in 1..=dim {
        if values[i] < values[best] {
            best = i;
        }
    }
    OptimOutcome {
        x: simplex[best].clone(),
        value: values[best],
        iterations,
        converged,
    }
}

fn simplex_diameter(simplex: &[Vec<f64>]) -> f64 {
    let mut d = 0.0f64;
    for i in 0..simplex.len() {
        for j in i + 1..simplex.len() {
            let dist: f64 = simplex[i]
                .iter()
                .zip(&simplex[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            d = d.max(dist);
        }
    }
    d
}
