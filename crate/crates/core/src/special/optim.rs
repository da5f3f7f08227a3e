//! Derivative-free minimisation (Nelder-Mead simplex).

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    /// Initial simplex step along each coordinate.
    pub step: f64,
    /// Stop when the spread of simplex values falls below this.
    pub f_tol: f64,
    /// ... and the simplex diameter below this.
    pub x_tol: f64,
    pub max_evals: usize,
    /// Fresh simplices built around the incumbent after convergence.
    pub restarts: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            step: 0.25,
            f_tol: 1e-10,
            x_tol: 1e-9,
            max_evals: 20_000,
            restarts: 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Minimise `f` from `start`. Non-finite objective values are treated as
/// `+inf`, so infeasible regions can be signalled by returning NaN.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, start: &[f64], opts: NelderMeadOptions) -> Minimum {
    let mut eval = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut best = start.to_vec();
    let mut best_val = eval(&best);
    let mut evals = 1;
    let mut converged = false;
    for _ in 0..=opts.restarts {
        let run = simplex_run(&mut eval, &best, best_val, opts, opts.max_evals.saturating_sub(evals));
        evals += run.evals;
        let improved = run.value < best_val;
        if run.value <= best_val {
            best = run.x;
            best_val = run.value;
        }
        converged = run.converged;
        if !improved && converged {
            break;
        }
        if evals >= opts.max_evals {
            break;
        }
    }
    Minimum {
        x: best,
        value: best_val,
        evals,
        converged,
    }
}

fn simplex_run<F: FnMut(&[f64]) -> f64>(
    eval: &mut F,
    start: &[f64],
    start_val: f64,
    opts: NelderMeadOptions,
    budget: usize,
) -> Minimum {
    let n = start.len();
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut vals: Vec<f64> = Vec::with_capacity(n + 1);
    pts.push(start.to_vec());
    vals.push(start_val);
    let mut evals = 0;
    for i in 0..n {
        let mut p = start.to_vec();
        p[i] += if p[i].abs() > 1.0 { opts.step * p[i].abs() } else { opts.step };
        vals.push(eval(&p));
        pts.push(p);
        evals += 1;
    }
    let mut converged = false;
    while evals < budget {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        let spread = (vals[n] - vals[0]).abs();
        let diameter = pts[1..]
            .iter()
            .flat_map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread <= opts.f_tol * (1.0 + vals[0].abs()) && diameter <= opts.x_tol * (1.0 + norm_inf(&pts[0])) {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..n).map(|j| pts[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&pts[n]).map(|(c, w)| c + t * (c - w)).collect() };

        let reflected = along(1.0);
        let fr = eval(&reflected);
        evals += 1;
        if fr < vals[0] {
            let expanded = along(2.0);
            let fe = eval(&expanded);
            evals += 1;
            if fe < fr {
                pts[n] = expanded;
                vals[n] = fe;
            } else {
                pts[n] = reflected;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            pts[n] = reflected;
            vals[n] = fr;
        } else {
            let (contracted, fc) = if fr < vals[n] {
                let c = along(0.5);
                let v = eval(&c);
                (c, v)
            } else {
                let c = along(-0.5);
                let v = eval(&c);
                (c, v)
            };
            evals += 1;
            if fc < vals[n].min(fr) {
                pts[n] = contracted;
                vals[n] = fc;
            } else {
                for i in 1..=n {
                    let shrunk: Vec<f64> = pts[i].iter().zip(&pts[0]).map(|(p, b)| b + 0.5 * (p - b)).collect();
                    vals[i] = eval(&shrunk);
                    pts[i] = shrunk;
                    evals += 1;
                }
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
    Minimum {
        x: pts[best].clone(),
        value: vals[best],
        evals,
        converged,
    }
}

fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}
