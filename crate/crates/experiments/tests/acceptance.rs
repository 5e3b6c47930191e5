//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Verdicts are printed, not asserted; set `QINFER_ACCEPTANCE_STRICT=1` to
//! turn any FAIL into a nonzero exit status.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use qinfer_core::approx_vi::{
    approx_q_covariance, interp_jacobian, GeneralizationMap, RepresentativeSet,
};
use qinfer_core::baselines::random_explore_policy;
use qinfer_core::constrained::{
    constrained_value_covariance, solve_constrained, ConstrainedParams,
};
use qinfer_core::estimation::{empirical_model, Simulator, TrajectoryDataset};
use qinfer_core::fixtures;
use qinfer_core::inference::{fixed_policy_covariance, q_covariance, resolvent, InferenceOptions};
use qinfer_core::lp::{solve_lp, LinearProgram};
use qinfer_core::mdp::{extended_transition, greedy_policy, solve_q, stationary_distribution};
use qinfer_core::qocba::{
    allocation_of_policy, balance_residual, policy_from_allocation, solve_minmax_allocation,
    BarrierOptions,
};
use qinfer_core::rng::stream_rng;
use qinfer_core::{EmpiricalModel, Matrix, Params, Policy};
use qinfer_experiments::config::ExperimentConfig;
use qinfer_experiments::riverswim::{build_riverswim, RiverSwimSpec};
use qinfer_experiments::run::run_experiment;
use qinfer_experiments::table::ResultTable;
use rand::Rng;
use rayon::prelude::*;

const SEED: u64 = 1;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn rel_frobenius(est: &[Vec<f64>], reference: &Matrix) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (i, row) in est.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            num += (x - reference[(i, j)]).powi(2);
            den += reference[(i, j)].powi(2);
        }
    }
    (num / den).sqrt()
}

/// Sample covariance of `sqrt(n) * x` over replications.
fn scaled_covariance(xs: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    let m = xs.len() as f64;
    let d = xs[0].len();
    let mean: Vec<f64> = (0..d)
        .map(|k| xs.iter().map(|x| x[k]).sum::<f64>() / m)
        .collect();
    (0..d)
        .map(|a| {
            (0..d)
                .map(|b| {
                    xs.iter()
                        .map(|x| (x[a] - mean[a]) * (x[b] - mean[b]))
                        .sum::<f64>()
                        / (m - 1.0)
                        * n as f64
                })
                .collect()
        })
        .collect()
}

fn estimate(table: &ResultTable, label: &str, n: u64, quantity: &str) -> f64 {
    table
        .find(label, Some(n), quantity)
        .unwrap_or_else(|| panic!("missing row {label} n={n} {quantity}"))
        .estimate
}

fn na(table: &ResultTable, label: &str, n: u64, quantity: &str) -> usize {
    table.find(label, Some(n), quantity).map_or(0, |r| r.na)
}

fn run(text: &str) -> ResultTable {
    let cfg = ExperimentConfig::parse(text).expect("valid config");
    run_experiment(&cfg).expect("experiment runs")
}

fn criterion_1() -> Verdict {
    let mdp = fixtures::fix_d();
    let params = mdp.params();
    let pi = Policy::uniform(3, 2);
    let w = allocation_of_policy(params, &pi).unwrap();
    let sigma = q_covariance(params, &w, &InferenceOptions::default())
        .unwrap()
        .sigma;
    let (n, reps) = (200_000, 2000);
    let sim = Simulator::new(&mdp);
    let qs: Vec<Vec<f64>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(SEED, r as u64);
            let mut data = TrajectoryDataset::stats_only(3, 2);
            sim.run(&pi, n, None, &mut data, &mut rng);
            let emp: EmpiricalModel = empirical_model(&data);
            let p = emp.params(mdp.gamma()).unwrap();
            solve_q(&p, 1e-12, 1_000_000).unwrap().into_vec()
        })
        .collect();
    let err = rel_frobenius(&scaled_covariance(&qs, n), &sigma);
    verdict(
        err <= 0.10,
        format!("relative Frobenius error {err:.4} (limit 0.10)"),
    )
}

fn criterion_2() -> Verdict {
    let t = run(&format!(
        r#"
kind = "coverage"
seed = {SEED}
replications = 1000
n = [10000, 50000]
[env.riverswim]
m_s = 6
[policy]
kind = "random"
p_right = 0.8
"#
    ));
    let l = "RE(0.8)";
    let (q_hi, chi_hi) = (
        estimate(&t, l, 50000, "q_avg_coverage"),
        estimate(&t, l, 50000, "chi_coverage"),
    );
    let (q_lo, chi_lo) = (
        estimate(&t, l, 10000, "q_avg_coverage"),
        estimate(&t, l, 10000, "chi_coverage"),
    );
    let inside = |x: f64| (0.93..=0.97).contains(&x);
    let pass = inside(q_hi) && inside(chi_hi) && q_lo < q_hi && chi_lo < chi_hi;
    verdict(
        pass,
        format!(
            "n=5e4: Q {q_hi:.4}, chi {chi_hi:.4} (need [0.93,0.97]); n=1e4: Q {q_lo:.4}, chi {chi_lo:.4} (need strictly lower)"
        ),
    )
}

fn criterion_3() -> Verdict {
    let t = run(&format!(
        r#"
kind = "coverage"
seed = {SEED}
replications = 300
n = 100000
[env.riverswim]
m_s = 13
[policy]
kind = "random"
p_right = 0.85
[approx]
stride = 3
"#
    ));
    let l = "RE(0.85)";
    let q = estimate(&t, l, 100000, "q_avg_coverage");
    let chi = estimate(&t, l, 100000, "chi_coverage");
    let bad = na(&t, l, 100000, "q_avg_coverage");
    let inside = |x: f64| (0.90..=0.98).contains(&x);

    let env = build_riverswim(&RiverSwimSpec::with_states(13)).unwrap();
    let w = allocation_of_policy(env.params(), &random_explore_policy(13, 0.85)).unwrap();
    let opts = InferenceOptions::default();
    let exact = q_covariance(env.params(), &w, &opts).unwrap().sigma;
    let map: GeneralizationMap<f64> = interp_jacobian(13, 2, &RepresentativeSet::full(13)).unwrap();
    let approx = approx_q_covariance(env.params(), &w, &map, &opts)
        .unwrap()
        .sigma;
    let mut diff = 0.0f64;
    for i in 0..26 {
        for j in 0..26 {
            diff = diff.max((approx[(i, j)] - exact[(i, j)]).abs());
        }
    }
    verdict(
        inside(q) && inside(chi) && diff <= 1e-10,
        format!("coverage Q {q:.4}, chi {chi:.4} (need [0.90,0.98], NA {bad}); S0=S max |diff| {diff:.2e}"),
    )
}

fn selection_config(r_l: f64, n: u64, agents: &str) -> String {
    format!(
        r#"
kind = "correct-selection"
seed = {SEED}
replications = 500
n = {n}
[env.riverswim]
m_s = 6
r_l = {r_l:?}
[warm_start]
fraction = 0.3
p_right = 0.6
{agents}
"#
    )
}

fn criterion_4() -> Verdict {
    let agents = "[[agents]]\nkind = \"qocba\"\n[[agents]]\nkind = \"random\"\np_right = 0.6\n";
    let t3 = run(&selection_config(3.0, 1000, agents));
    let qo = estimate(&t3, "Q-OCBA", 1000, "correct_selection");
    let re = estimate(&t3, "RE(0.6)", 1000, "correct_selection");
    let (qo_na, re_na) = (
        na(&t3, "Q-OCBA", 1000, "correct_selection"),
        na(&t3, "RE(0.6)", 1000, "correct_selection"),
    );
    let t2 = run(&selection_config(
        2.0,
        10000,
        "[[agents]]\nkind = \"qocba\"\n",
    ));
    let qo2 = estimate(&t2, "Q-OCBA", 10000, "correct_selection");
    let qo2_na = na(&t2, "Q-OCBA", 10000, "correct_selection");
    verdict(
        qo - re >= 0.10 && qo2 >= 0.95,
        format!(
            "r_L=3 n=1e3: Q-OCBA {qo:.3} (NA {qo_na}) vs RE(0.6) {re:.3} (NA {re_na}), need gap >= 0.10; r_L=2 n=1e4: Q-OCBA {qo2:.3} (NA {qo2_na}), need >= 0.95"
        ),
    )
}

fn criterion_5() -> Verdict {
    let t = run(&format!(
        r#"
kind = "ci-length"
seed = {SEED}
replications = 200
n = 10000
[env.riverswim]
m_s = 6
r_l = 2.0
[warm_start]
fraction = 0.3
p_right = 0.8
[[agents]]
kind = "qocba"
objective = "chi-variance"
[[agents]]
kind = "random"
p_right = 0.8
"#
    ));
    let (a, b) = ("Q-OCBA-chi", "RE(0.8)");
    let (len_a, len_b) = (
        estimate(&t, a, 10000, "chi_ci_length"),
        estimate(&t, b, 10000, "chi_ci_length"),
    );
    let (cov_a, cov_b) = (
        estimate(&t, a, 10000, "chi_coverage"),
        estimate(&t, b, 10000, "chi_coverage"),
    );
    let ratio = len_a / len_b;
    let inside = |x: f64| (0.92..=0.98).contains(&x);
    verdict(
        ratio <= 0.6 && inside(cov_a) && inside(cov_b),
        format!(
            "chi CI length {len_a:.4} vs {len_b:.4}, ratio {ratio:.4} (need <= 0.6); coverage {cov_a:.3} / {cov_b:.3} (need [0.92,0.98])"
        ),
    )
}

fn random_policy(m_s: usize, m_a: usize, rng: &mut impl Rng) -> Policy {
    let mut probs = Vec::with_capacity(m_s * m_a);
    for _ in 0..m_s {
        let row: Vec<f64> = (0..m_a).map(|_| rng.random::<f64>() + 1e-3).collect();
        let s: f64 = row.iter().sum();
        probs.extend(row.iter().map(|x| x / s));
    }
    Policy::from_flat(m_s, m_a, probs).unwrap()
}

fn criterion_6() -> Verdict {
    let env = build_riverswim(&RiverSwimSpec::default()).unwrap();
    let p = env.params();
    let mut rng = stream_rng(SEED, 6);
    let mut worst_in = 0.0f64;
    for _ in 0..100 {
        let pi = random_policy(6, 2, &mut rng);
        let w = stationary_distribution(&extended_transition(p, &pi).unwrap()).unwrap();
        let sum: f64 = w.iter().sum();
        let neg = w.iter().fold(0.0f64, |m, &x| m.max(-x));
        worst_in = worst_in
            .max(balance_residual(p, &w))
            .max((sum - 1.0).abs())
            .max(neg);
    }
    let mut worst_trip = 0.0f64;
    for _ in 0..100 {
        let w = allocation_of_policy(p, &random_policy(6, 2, &mut rng)).unwrap();
        let back = allocation_of_policy(p, &policy_from_allocation(&w, 6, 2).unwrap()).unwrap();
        worst_trip = w
            .iter()
            .zip(&back)
            .fold(worst_trip, |m, (a, b)| m.max((a - b).abs()));
    }
    verdict(
        worst_in <= 1e-8 && worst_trip <= 1e-8,
        format!("max constraint violation {worst_in:.2e}, max round-trip error {worst_trip:.2e} (limit 1e-8)"),
    )
}

fn criterion_7() -> Verdict {
    let mdp = fixtures::fix_d();
    let base = mdp.params().clone();
    let q0 = solve_q(&base, 1e-13, 1_000_000).unwrap();
    let (pi, _) = greedy_policy(&q0, 0.0);
    let a = resolvent(&base, &pi).unwrap();
    let h = 1e-5;
    let n = base.n_pairs();
    let solve_at = |k: usize, d: f64| {
        let mut p: Params = base.clone();
        p.mu_r[k] += d;
        solve_q(&p, 1e-13, 1_000_000).unwrap().into_vec()
    };
    let mut worst = 0.0f64;
    for k in 0..n {
        let (up, down) = (solve_at(k, h), solve_at(k, -h));
        for i in 0..n {
            let fd = (up[i] - down[i]) / (2.0 * h);
            worst = worst.max((fd - a[(i, k)]).abs());
        }
    }
    verdict(
        worst <= 1e-4,
        format!("max entrywise error {worst:.2e} (limit 1e-4)"),
    )
}

fn criterion_8() -> Verdict {
    let cm = fixtures::fix_e();
    let cp = cm.params();
    let (_, split, _) = solve_constrained(&cp).unwrap();
    let randomized = (0..2)
        .filter(|&s| (0..2).filter(|&a| split.policy.prob(s, a) > 0.0).count() > 1)
        .count();
    let loss: f64 = cp
        .cost_value(&split.policy)
        .unwrap()
        .iter()
        .zip(&cp.rho)
        .map(|(l, r)| l * r)
        .sum();
    let slack = (loss - cp.budget).abs();

    let pi = Policy::uniform(2, 2);
    let w = allocation_of_policy(cm.base.params(), &pi).unwrap();
    let sigma = constrained_value_covariance(&cp, &split, &w).unwrap();
    let (n, reps) = (200_000, 2000);
    let sim = Simulator::new(&cm.base).with_costs(&cm.costs);
    let runs: Vec<Option<Vec<f64>>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(SEED + 8, r as u64);
            let mut data = TrajectoryDataset::stats_only(2, 2);
            sim.run(&pi, n, None, &mut data, &mut rng);
            let emp: EmpiricalModel = empirical_model(&data);
            let ep = ConstrainedParams::from_empirical(&emp, cm.base.gamma(), &cp.rho, cp.budget)
                .ok()?;
            solve_constrained(&ep).ok().map(|(_, _, v)| v)
        })
        .collect();
    let failed = runs.iter().filter(|r| r.is_none()).count();
    let vs: Vec<Vec<f64>> = runs.into_iter().flatten().collect();
    let err = rel_frobenius(&scaled_covariance(&vs, n), &sigma);

    let slack_cp = cm.clone().with_budget(100.0).params();
    let (_, slack_split, _) = solve_constrained(&slack_cp).unwrap();
    let c2 = constrained_value_covariance(&slack_cp, &slack_split, &w).unwrap();
    let c1 = fixed_policy_covariance(&slack_cp.base, &w, &slack_split.policy).unwrap();
    let mut red = 0.0f64;
    for i in 0..2 {
        for j in 0..2 {
            red = red.max((c2[(i, j)] - c1[(i, j)]).abs());
        }
    }
    let pass = split.is_split()
        && randomized == 1
        && slack <= 1e-8
        && err <= 0.15
        && !slack_split.is_split()
        && red <= 1e-12;
    verdict(
        pass,
        format!(
            "randomized states {randomized}, |constraint slack| {slack:.2e}, MC relative Frobenius {err:.4} (limit 0.15, {failed} failed reps), non-binding reduction {red:.2e}"
        ),
    )
}

/// Minimum of a convex `f` over a box by repeated zooming grids.
fn zoom_grid(
    f: &dyn Fn(&[f64]) -> f64,
    lo: &[f64],
    hi: &[f64],
    points: usize,
    rounds: usize,
) -> f64 {
    let d = lo.len();
    let (mut lo, mut hi) = (lo.to_vec(), hi.to_vec());
    let mut best = (f64::INFINITY, lo.clone());
    let (lo0, hi0) = (lo.clone(), hi.clone());
    for _ in 0..rounds {
        let total = points.pow(d as u32);
        for idx in 0..total {
            let mut rem = idx;
            let x: Vec<f64> = (0..d)
                .map(|j| {
                    let t = (rem % points) as f64 / (points - 1) as f64;
                    rem /= points;
                    lo[j] + t * (hi[j] - lo[j])
                })
                .collect();
            let v = f(&x);
            if v < best.0 {
                best = (v, x);
            }
        }
        for j in 0..d {
            let step = (hi[j] - lo[j]) / (points - 1) as f64;
            lo[j] = (best.1[j] - 2.0 * step).max(lo0[j]);
            hi[j] = (best.1[j] + 2.0 * step).min(hi0[j]);
        }
    }
    best.0
}

fn criterion_9() -> Verdict {
    let mut rng = stream_rng(SEED, 9);
    let eta = 1e-6;
    let mut worst_barrier = 0.0f64;
    // one state: the polytope is the simplex over m_a <= 4 actions
    for m_a in [2usize, 3, 4] {
        for _ in 0..3 {
            let p = Params {
                m_s: 1,
                m_a,
                gamma: 0.5,
                mu_r: vec![0.0; m_a],
                sigma2_r: vec![1.0; m_a],
                p: vec![1.0; m_a],
            };
            let terms: Vec<Vec<f64>> = (0..2)
                .map(|_| (0..m_a).map(|_| rng.random::<f64>() + 0.05).collect())
                .collect();
            let obj = |w: &[f64]| {
                terms
                    .iter()
                    .map(|t| t.iter().zip(w).map(|(c, x)| c / x).sum::<f64>())
                    .fold(0.0, f64::max)
            };
            let got = solve_minmax_allocation(&terms, &p, eta, &BarrierOptions::default())
                .unwrap()
                .objective;
            let free = |x: &[f64]| {
                let last = 1.0 - x.iter().sum::<f64>();
                if last < eta {
                    return f64::INFINITY;
                }
                let mut w = x.to_vec();
                w.push(last);
                obj(&w)
            };
            let grid = zoom_grid(&free, &vec![eta; m_a - 1], &vec![1.0; m_a - 1], 41, 8);
            worst_barrier = worst_barrier.max((got - grid).abs() / grid);
        }
    }
    // two states, two actions: sum and one balance row leave two free coordinates
    for _ in 0..3 {
        let mut pm = Vec::new();
        for _ in 0..4 {
            let a = 0.1 + 0.8 * rng.random::<f64>();
            pm.extend([a, 1.0 - a]);
        }
        let p = Params {
            m_s: 2,
            m_a: 2,
            gamma: 0.5,
            mu_r: vec![0.0; 4],
            sigma2_r: vec![1.0; 4],
            p: pm.clone(),
        };
        let terms: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..4).map(|_| rng.random::<f64>() + 0.05).collect())
            .collect();
        let obj = |w: &[f64]| {
            terms
                .iter()
                .map(|t| t.iter().zip(w).map(|(c, x)| c / x).sum::<f64>())
                .fold(0.0, f64::max)
        };
        let got = solve_minmax_allocation(&terms, &p, eta, &BarrierOptions::default())
            .unwrap()
            .objective;
        // balance of state 0: w0 + w1 = sum_k w_k P(0|k); w3 = 1 - w0 - w1 - w2
        let free = |x: &[f64]| {
            let (w0, w1) = (x[0], x[1]);
            let (p00, p01, p10, p11) = (pm[0], pm[2], pm[4], pm[6]);
            // w0 + w1 - w0 p00 - w1 p01 - w2 p10 - (1 - w0 - w1 - w2) p11 = 0
            let denom = p10 - p11;
            if denom.abs() < 1e-12 {
                return f64::INFINITY;
            }
            let w2 = (w0 + w1 - w0 * p00 - w1 * p01 - p11 + (w0 + w1) * p11) / denom;
            let w3 = 1.0 - w0 - w1 - w2;
            if w2 < eta || w3 < eta {
                return f64::INFINITY;
            }
            obj(&[w0, w1, w2, w3])
        };
        let grid = zoom_grid(&free, &[eta, eta], &[1.0, 1.0], 201, 10);
        worst_barrier = worst_barrier.max((got - grid).abs() / grid);
    }

    let mut worst_lp = 0.0f64;
    for case in 0..50 {
        let n = 2 + case % 2;
        let m = 2 + (case / 2) % 2;
        let c: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 0.5).collect();
        let rows: Vec<(Vec<f64>, f64)> = (0..m)
            .map(|_| {
                (
                    (0..n).map(|_| 0.1 + rng.random::<f64>()).collect(),
                    0.5 + rng.random::<f64>(),
                )
            })
            .collect();
        let eq = (case % 5 == 0).then(|| {
            (
                (0..n)
                    .map(|_| 0.1 + rng.random::<f64>())
                    .collect::<Vec<f64>>(),
                0.2 + 0.3 * rng.random::<f64>(),
            )
        });
        let mut lp = LinearProgram::maximize(c.clone());
        for (a, b) in &rows {
            lp = lp.le(a.clone(), *b);
        }
        if let Some((a, b)) = &eq {
            lp = lp.eq(a.clone(), *b);
        }
        let got = solve_lp(&lp).unwrap().objective;
        let best = enumerate_vertices(&c, &rows, eq.as_ref());
        worst_lp = worst_lp.max((got - best).abs());
    }
    verdict(
        worst_barrier <= 1e-3 && worst_lp <= 1e-8,
        format!("barrier vs grid worst relative gap {worst_barrier:.2e} (limit 1e-3); LP vs vertices worst gap {worst_lp:.2e} (limit 1e-8)"),
    )
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for k in col..n {
                a[r][k] -= f * a[col][k];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Best objective over all basic feasible points of
/// `max c.x, rows: a.x <= b, optional a.x = b, x >= 0`.
fn enumerate_vertices(c: &[f64], rows: &[(Vec<f64>, f64)], eq: Option<&(Vec<f64>, f64)>) -> f64 {
    let n = c.len();
    let mut cands: Vec<(Vec<f64>, f64)> = rows.to_vec();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        cands.push((e, 0.0));
    }
    let fixed: Vec<(Vec<f64>, f64)> = eq.into_iter().cloned().collect();
    let k = n - fixed.len();
    let mut best = f64::NEG_INFINITY;
    let total = cands.len();
    for mask in 0u32..(1 << total) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let mut active = fixed.clone();
        active.extend(
            (0..total)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| cands[i].clone()),
        );
        let (a, b): (Vec<Vec<f64>>, Vec<f64>) = active.into_iter().unzip();
        let Some(x) = solve_dense(a, b) else { continue };
        let feasible = x.iter().all(|&v| v >= -1e-10)
            && rows
                .iter()
                .all(|(a, b)| a.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() <= b + 1e-10);
        if feasible {
            best = best.max(c.iter().zip(&x).map(|(p, q)| p * q).sum());
        }
    }
    best
}

fn criterion_10() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("det.toml");
    std::fs::write(
        &cfg,
        format!(
            r#"
kind = "correct-selection"
seed = {SEED}
replications = 40
n = [1000, 3000]
[env.riverswim]
m_s = 6
r_l = 3.0
[[agents]]
kind = "qocba"
[[agents]]
kind = "eps-greedy"
eps = 0.2
[[agents]]
kind = "psrl"
episodes = 10
[[agents]]
kind = "random"
p_right = 0.6
"#
        ),
    )
    .unwrap();
    let bin = env!("CARGO_BIN_EXE_qinfer");
    let run_with = |threads: usize, out: &Path| {
        let status = Command::new(bin)
            .args(["select", "--config"])
            .arg(&cfg)
            .args(["--threads", &threads.to_string(), "--output"])
            .arg(out)
            .stdout(std::process::Stdio::null())
            .status()
            .unwrap();
        assert!(status.success(), "qinfer exited with {status}");
        std::fs::read(out).unwrap()
    };
    let a = run_with(1, &dir.path().join("t1.csv"));
    let b = run_with(1, &dir.path().join("t1b.csv"));
    let c = run_with(4, &dir.path().join("t4.csv"));
    verdict(
        a == b && a == c && !a.is_empty(),
        format!(
            "{} bytes; rerun identical: {}; 1 vs 4 threads identical: {}",
            a.len(),
            a == b,
            a == c
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("fixed-data covariance vs Monte Carlo", criterion_1),
        ("coverage on RiverSwim(6)", criterion_2),
        ("approximate-VI coverage and reduction", criterion_3),
        ("Q-OCBA correct selection", criterion_4),
        ("Q-OCBA-chi interval length", criterion_5),
        ("allocation polytope", criterion_6),
        ("implicit gradient", criterion_7),
        ("constrained split policy", criterion_8),
        ("barrier and LP solvers", criterion_9),
        ("CLI determinism", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let v = f();
        if !v.pass {
            failed += 1;
        }
        println!(
            "{} criterion {:>2} {}: {} [{:.1}s]",
            if v.pass { "PASS" } else { "FAIL" },
            i + 1,
            name,
            v.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    let strict = std::env::var("QINFER_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && failed > 0 {
        std::process::exit(1);
    }
}
