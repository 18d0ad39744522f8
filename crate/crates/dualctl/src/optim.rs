//! Derivative-free minimisation for the low-dimensional inner problems.
//!
//! The policy and the verification checks minimise piecewise-smooth
//! objectives (pointwise maxima of a few smooth branches) over at most a
//! handful of coordinates. A Nelder–Mead simplex with restarts is accurate
//! and cheap at these sizes, and being derivative-free it is indifferent to
//! the kinks where branches cross.

/// Stopping rules and budget for one simplex run.
#[derive(Debug, Clone)]
pub struct NmOptions {
    /// Maximum number of simplex iterations.
    pub max_iter: usize,
    /// Stop when the simplex values agree to this relative spread.
    pub f_tol: f64,
    /// Stop when the simplex collapses to this diameter.
    pub x_tol: f64,
}

impl Default for NmOptions {
    fn default() -> Self {
        Self {
            max_iter: 600,
            f_tol: 1e-13,
            x_tol: 1e-12,
        }
    }
}

/// Outcome of a minimisation.
#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
}

fn sanitize(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Minimises `f` by the Nelder–Mead simplex method starting from `start`
/// with initial per-coordinate displacement `step`.
pub fn nelder_mead<F>(mut f: F, start: &[f64], step: f64, opts: &NmOptions) -> OptimResult
where
    F: FnMut(&[f64]) -> f64,
{
    let dim = start.len();
    assert!(dim > 0, "cannot optimise over zero coordinates");
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        sanitize(f(x))
    };

    // Initial simplex: the start plus one displaced vertex per coordinate.
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    simplex.push(start.to_vec());
    for i in 0..dim {
        let mut v = start.to_vec();
        let d = if step != 0.0 { step } else { 1e-3 };
        v[i] += if v[i].abs() > 1.0 { d * v[i].abs() } else { d };
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v, &mut evals)).collect();

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    for _ in 0..opts.max_iter {
        // Order vertices best → worst.
        let mut idx: Vec<usize> = (0..=dim).collect();
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let reorder = |v: &mut Vec<Vec<f64>>, w: &mut Vec<f64>, idx: &[usize]| {
            let nv: Vec<Vec<f64>> = idx.iter().map(|&i| v[i].clone()).collect();
            let nw: Vec<f64> = idx.iter().map(|&i| w[i]).collect();
            *v = nv;
            *w = nw;
        };
        reorder(&mut simplex, &mut values, &idx);

        let spread = values[dim] - values[0];
        let diam = simplex[1..]
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&simplex[0])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if spread <= opts.f_tol * (1.0 + values[0].abs()) && diam <= opts.x_tol {
            break;
        }

        // Centroid of all but the worst vertex.
        let mut centroid = vec![0.0; dim];
        for v in &simplex[..dim] {
            for (c, &vi) in centroid.iter_mut().zip(v) {
                *c += vi / dim as f64;
            }
        }
        let worst = simplex[dim].clone();
        let blend = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> {
            a.iter()
                .zip(b)
                .map(|(&ai, &bi)| ai + t * (bi - ai))
                .collect()
        };

        // Reflection.
        let reflected = blend(&centroid, &worst, -alpha);
        let fr = eval(&reflected, &mut evals);
        if fr < values[0] {
            // Expansion.
            let expanded = blend(&centroid, &worst, -gamma);
            let fe = eval(&expanded, &mut evals);
            if fe < fr {
                simplex[dim] = expanded;
                values[dim] = fe;
            } else {
                simplex[dim] = reflected;
                values[dim] = fr;
            }
            continue;
        }
        if fr < values[dim - 1] {
            simplex[dim] = reflected;
            values[dim] = fr;
            continue;
        }
        // Contraction (outside if the reflection improved on the worst).
        let contracted = if fr < values[dim] {
            blend(&centroid, &reflected, rho)
        } else {
            blend(&centroid, &worst, rho)
        };
        let fc = eval(&contracted, &mut evals);
        if fc < values[dim].min(fr) {
            simplex[dim] = contracted;
            values[dim] = fc;
            continue;
        }
        // Shrink towards the best vertex.
        let best = simplex[0].clone();
        for i in 1..=dim {
            simplex[i] = blend(&best, &simplex[i], sigma);
            values[i] = eval(&simplex[i], &mut evals);
        }
    }

    let mut best = 0;
    for i in 1..=dim {
        if values[i] < values[best] {
            best = i;
        }
    }
    OptimResult {
        x: simplex[best].clone(),
        value: values[best],
        evals,
    }
}

/// Runs the simplex from every start and keeps the best minimum found.
pub fn multi_start<F>(mut f: F, starts: &[Vec<f64>], step: f64, opts: &NmOptions) -> OptimResult
where
    F: FnMut(&[f64]) -> f64,
{
    assert!(!starts.is_empty(), "need at least one start");
    let mut best: Option<OptimResult> = None;
    let mut total_evals = 0usize;
    for s in starts {
        let r = nelder_mead(&mut f, s, step, opts);
        total_evals += r.evals;
        if best.as_ref().is_none_or(|b| r.value < b.value) {
            best = Some(r);
        }
    }
    let mut out = best.expect("at least one start");
    out.evals = total_evals;
    out
}

/// One-dimensional golden-section polish of coordinate `idx` around the
/// current point, keeping the other coordinates fixed. Useful as a final
/// sharpening step when one coordinate enters the objective smoothly.
pub fn polish_coordinate<F>(
    mut f: F,
    x: &mut Vec<f64>,
    idx: usize,
    radius: f64,
    iters: usize,
) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    let inv_phi = 0.5 * (5.0_f64.sqrt() - 1.0);
    let mut lo = x[idx] - radius;
    let mut hi = x[idx] + radius;
    let mut probe = |t: f64, x: &mut Vec<f64>| {
        let old = x[idx];
        x[idx] = t;
        let v = sanitize(f(x));
        x[idx] = old;
        v
    };
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = probe(c, x);
    let mut fd = probe(d, x);
    for _ in 0..iters {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = probe(c, x);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = probe(d, x);
        }
    }
    let mid = 0.5 * (lo + hi);
    let fm = probe(mid, x);
    let current = probe(x[idx], x);
    if fm < current {
        x[idx] = mid;
        fm
    } else {
        current
    }
}
