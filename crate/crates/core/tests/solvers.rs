use proptest::prelude::*;
use qinfer_core::lp::{solve_lp, LinearProgram};
use qinfer_core::mdp::MdpParams;
use qinfer_core::qocba::{
    allocation_of_policy, balance_residual, policy_from_allocation, solve_minmax_allocation,
    BarrierOptions,
};
use qinfer_core::Policy;

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

/// Max of `c.x` over the vertices of `{a.x <= b, x >= 0}`.
fn vertex_max(c: &[f64], rows: &[(Vec<f64>, f64)]) -> f64 {
    let n = c.len();
    let mut cands = rows.to_vec();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        cands.push((e, 0.0));
    }
    let mut best = f64::NEG_INFINITY;
    for mask in 0u32..(1 << cands.len()) {
        if mask.count_ones() as usize != n {
            continue;
        }
        let (a, b): (Vec<Vec<f64>>, Vec<f64>) = (0..cands.len())
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| cands[i].clone())
            .unzip();
        let Some(x) = solve_dense(a, b) else { continue };
        let ok = x.iter().all(|&v| v >= -1e-10)
            && rows
                .iter()
                .all(|(a, b)| a.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() <= b + 1e-10);
        if ok {
            best = best.max(c.iter().zip(&x).map(|(p, q)| p * q).sum());
        }
    }
    best
}

fn small_lp() -> impl Strategy<Value = (Vec<f64>, Vec<(Vec<f64>, f64)>)> {
    (2usize..=3, 1usize..=4).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(-1.0f64..2.0, n),
            prop::collection::vec((prop::collection::vec(0.05f64..1.5, n), 0.2f64..2.0), m),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn simplex_matches_vertex_enumeration((c, rows) in small_lp()) {
        let mut lp = LinearProgram::maximize(c.clone());
        for (a, b) in &rows {
            lp = lp.le(a.clone(), *b);
        }
        let sol = solve_lp(&lp).unwrap();
        prop_assert!((sol.objective - vertex_max(&c, &rows)).abs() <= 1e-8);
        for (a, b) in &rows {
            prop_assert!(a.iter().zip(&sol.x).map(|(p, q)| p * q).sum::<f64>() <= b + 1e-9);
        }
        prop_assert!(sol.x.iter().all(|&v| v >= -1e-12));
    }

    #[test]
    fn allocation_round_trip(
        rows in prop::collection::vec(prop::collection::vec(0.05f64..1.0, 3), 6),
        probs in prop::collection::vec(0.01f64..1.0, 6),
    ) {
        let p = random_params(&rows);
        let pi = policy(&probs);
        let w = allocation_of_policy(&p, &pi).unwrap();
        prop_assert!(balance_residual(&p, &w) < 1e-10);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        let back = policy_from_allocation(&w, 3, 2).unwrap();
        for (a, b) in back.as_slice().iter().zip(pi.as_slice()) {
            prop_assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn barrier_beats_sampled_allocations(
        rows in prop::collection::vec(prop::collection::vec(0.05f64..1.0, 3), 6),
        coeffs in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 6), 1..3),
        samples in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 6), 20),
    ) {
        let p = random_params(&rows);
        let out = solve_minmax_allocation(&coeffs, &p, 1e-6, &BarrierOptions::default()).unwrap();
        prop_assert!(balance_residual(&p, &out.allocation.w) < 1e-8);
        let obj = |w: &[f64]| coeffs.iter().map(|c| c.iter().zip(w).map(|(c, x)| c / x).sum::<f64>()).fold(0.0, f64::max);
        for s in &samples {
            let w = allocation_of_policy(&p, &policy(s)).unwrap();
            prop_assert!(out.objective <= obj(&w) * (1.0 + 1e-3) + 1e-12);
        }
    }
}

fn random_params(rows: &[Vec<f64>]) -> MdpParams<f64> {
    let p: Vec<f64> = rows
        .iter()
        .flat_map(|r| {
            let s: f64 = r.iter().sum();
            r.iter().map(move |x| x / s)
        })
        .collect();
    MdpParams {
        m_s: 3,
        m_a: 2,
        gamma: 0.9,
        mu_r: vec![0.0; 6],
        sigma2_r: vec![1.0; 6],
        p,
    }
}

fn policy(raw: &[f64]) -> Policy {
    let probs: Vec<f64> = raw
        .chunks(2)
        .flat_map(|r| {
            let s = r[0] + r[1];
            [r[0] / s, r[1] / s]
        })
        .collect();
    Policy::from_flat(3, 2, probs).unwrap()
}
