//! Dense two-phase simplex, independent of the library's flow solver.
//! Small instances only: the tableau is `rows x (vars + rows)`.

#![allow(dead_code)]

const EPS: f64 = 1e-11;

/// `min c.x` subject to `A x = b`, `x >= 0`. Returns the optimal value, or
/// `None` when infeasible.
pub fn solve_standard_form(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Option<f64> {
    let rows = a.len();
    let n = c.len();
    // columns: n structural, rows artificial, then rhs
    let width = n + rows + 1;
    let mut t = vec![vec![0.0; width]; rows];
    let mut basis = vec![0usize; rows];
    for r in 0..rows {
        let sign = if b[r] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[r][j] = sign * a[r][j];
        }
        t[r][n + r] = 1.0;
        t[r][width - 1] = sign * b[r];
        basis[r] = n + r;
    }

    let phase1: Vec<f64> = (0..n + rows).map(|j| if j >= n { 1.0 } else { 0.0 }).collect();
    run(&mut t, &mut basis, &phase1, n + rows);
    let infeas: f64 = (0..rows).map(|r| phase1[basis[r]] * t[r][width - 1]).sum();
    if infeas > 1e-9 {
        return None;
    }
    // drive artificials out of the basis where possible
    for r in 0..rows {
        if basis[r] >= n {
            if let Some(j) = (0..n).find(|&j| t[r][j].abs() > 1e-9) {
                pivot(&mut t, &mut basis, r, j);
            }
        }
    }
    let mut cost = c.to_vec();
    cost.extend(std::iter::repeat(f64::INFINITY).take(rows));
    // artificial columns are frozen in phase two
    run(&mut t, &mut basis, &cost, n);
    Some((0..rows).filter(|&r| basis[r] < n).map(|r| c[basis[r]] * t[r][width - 1]).sum())
}

fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], r: usize, j: usize) {
    let p = t[r][j];
    for v in t[r].iter_mut() {
        *v /= p;
    }
    let pivot_row = t[r].clone();
    for (rr, row) in t.iter_mut().enumerate() {
        if rr != r {
            let f = row[j];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
    }
    basis[r] = j;
}

/// Bland's rule over the first `allowed` columns.
fn run(t: &mut [Vec<f64>], basis: &mut [usize], cost: &[f64], allowed: usize) {
    let width = t[0].len();
    let basic_cost = |b: usize| if cost[b].is_finite() { cost[b] } else { 0.0 };
    loop {
        let entering = (0..allowed).find(|&j| {
            if basis.contains(&j) {
                return false;
            }
            let reduced = cost[j] - (0..t.len()).map(|r| basic_cost(basis[r]) * t[r][j]).sum::<f64>();
            reduced < -EPS
        });
        let Some(j) = entering else { return };
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..t.len() {
            if t[r][j] > EPS {
                let ratio = t[r][width - 1] / t[r][j];
                match leave {
                    Some((lr, best)) if ratio > best + 1e-14 || (ratio > best - 1e-14 && basis[r] > basis[lr]) => {}
                    _ => leave = Some((r, ratio)),
                }
            }
        }
        let Some((r, _)) = leave else { return };
        pivot(t, basis, r, j);
    }
}

/// Optimal value of `min <C, pi>` over plans with row marginal `mu` and
/// column marginal in the box `[alpha m, beta m]`.
pub fn projection_lp(c: &[Vec<f64>], mu: &[f64], m: &[f64], alpha: f64, beta: f64) -> Option<f64> {
    let (k, kv) = (c.len(), c[0].len());
    let plan = k * kv;
    // plan entries, then lower slack s_j and upper slack u_j per column
    let n = plan + 2 * kv;
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..k {
        let mut row = vec![0.0; n];
        for j in 0..kv {
            row[i * kv + j] = 1.0;
        }
        a.push(row);
        b.push(mu[i]);
    }
    for j in 0..kv {
        let mut lower = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for i in 0..k {
            lower[i * kv + j] = 1.0;
            upper[i * kv + j] = 1.0;
        }
        lower[plan + j] = -1.0;
        upper[plan + kv + j] = 1.0;
        a.push(lower);
        b.push(alpha * m[j]);
        a.push(upper);
        b.push(beta * m[j]);
    }
    let mut cost = vec![0.0; n];
    for i in 0..k {
        for j in 0..kv {
            cost[i * kv + j] = c[i][j];
        }
    }
    solve_standard_form(&a, &b, &cost)
}

/// Optimal transport cost between `mu` and `nu`.
pub fn transport_lp(c: &[Vec<f64>], mu: &[f64], nu: &[f64]) -> Option<f64> {
    let (k, kv) = (c.len(), c[0].len());
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..k {
        a.push((0..k * kv).map(|x| if x / kv == i { 1.0 } else { 0.0 }).collect());
        b.push(mu[i]);
    }
    for j in 0..kv {
        a.push((0..k * kv).map(|x| if x % kv == j { 1.0 } else { 0.0 }).collect());
        b.push(nu[j]);
    }
    let cost: Vec<f64> = c.iter().flatten().copied().collect();
    solve_standard_form(&a, &b, &cost)
}
