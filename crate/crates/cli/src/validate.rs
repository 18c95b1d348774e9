//! Quick self-checks for `magicount validate`.

use magicount_core::density::ProblemSpec;
use magicount_core::exact::{enumerate_count, exact_count, Margins, DEFAULT_STATE_BUDGET};
use magicount_core::formulas::{bbk_asymptotic, count_bounds, de_heuristic};
use magicount_core::permanent::{exact_permanent, naive_permanent, soules_upper_bound, vdw_lower_bound};
use magicount_core::sampler::{chain_rng, sample_uniform_simplex};
use magicount_core::scaling::{log_sigma, sigma_via_minimization, sinkhorn_scale, DEFAULT_MAX_ITER, DEFAULT_TOL};
use magicount_core::{Matrix, SimplexMatrix};
use rand::Rng;

type Check = Result<(), String>;

pub fn run_all() -> Vec<(&'static str, Check)> {
    vec![
        ("sigma maximum at the uniform matrix", sigma_maximum()),
        ("sinkhorn agrees with the variational oracle", sigma_oracle()),
        ("sinkhorn output is doubly stochastic", doubly_stochastic()),
        ("permanent: inclusion-exclusion equals expansion, N ≤ 6", permanent_oracle()),
        ("permanent: van der Waerden ≤ per ≤ Soules", permanent_sandwich()),
        ("exact count equals enumeration, small grid", exact_vs_enumeration()),
        ("exact count pins", exact_pins()),
        ("count bounds contain exact counts", bounds_contain()),
        ("DE heuristic pin n=12, t=8", de_pin()),
        ("BBK asymptotic pin n=25, t=5", bbk_pin()),
    ]
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond { Ok(()) } else { Err(msg()) }
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    ((value - target) / target).abs() <= rel
}

fn sigma_maximum() -> Check {
    let mut rng = chain_rng(1);
    for n in 1..=6 {
        let max = -(n as f64) * (n as f64).ln();
        let u = log_sigma(&SimplexMatrix::uniform(n)).map_err(|e| e.to_string())?;
        ensure((u - max).abs() < 1e-10, || format!("n={n}: uniform gives {u}, want {max}"))?;
        for _ in 0..20 {
            let x = sample_uniform_simplex(&mut rng, n);
            let v = log_sigma(&x).map_err(|e| e.to_string())?;
            ensure(v <= max + 1e-10, || format!("n={n}: ln σ = {v} exceeds {max}"))?;
        }
    }
    Ok(())
}

fn sigma_oracle() -> Check {
    let mut rng = chain_rng(2);
    for n in 2..=6 {
        for _ in 0..10 {
            let x = sample_uniform_simplex(&mut rng, n);
            let a = log_sigma(&x).map_err(|e| e.to_string())?;
            let b = sigma_via_minimization(&x, 1e-12).map_err(|e| e.to_string())?;
            ensure((a - b).abs() < 1e-6, || format!("n={n}: {a} vs {b}"))?;
        }
    }
    Ok(())
}

fn doubly_stochastic() -> Check {
    let mut rng = chain_rng(3);
    for n in 2..=8 {
        let x = sample_uniform_simplex(&mut rng, n);
        let r = sinkhorn_scale(&x, DEFAULT_TOL, DEFAULT_MAX_ITER).map_err(|e| e.to_string())?;
        ensure(r.residual <= DEFAULT_TOL, || format!("n={n}: residual {}", r.residual))?;
    }
    Ok(())
}

fn random_matrix(rng: &mut impl Rng, n: usize) -> Matrix {
    Matrix::from_vec(n, (0..n * n).map(|_| rng.random::<f64>()).collect()).expect("square")
}

fn permanent_oracle() -> Check {
    let mut rng = chain_rng(4);
    for n in 1..=6 {
        for _ in 0..5 {
            let m = random_matrix(&mut rng, n);
            let a = exact_permanent(&m).map_err(|e| e.to_string())?.ln();
            let b = naive_permanent(&m).map_err(|e| e.to_string())?.ln();
            ensure((a - b).abs() < 1e-10, || format!("n={n}: {a} vs {b}"))?;
        }
    }
    Ok(())
}

fn permanent_sandwich() -> Check {
    let mut rng = chain_rng(5);
    for n in 2..=10 {
        let x = sample_uniform_simplex(&mut rng, n);
        let y = sinkhorn_scale(&x, DEFAULT_TOL, DEFAULT_MAX_ITER).map_err(|e| e.to_string())?.y;
        let per = exact_permanent(&y).map_err(|e| e.to_string())?.ln();
        let lo = vdw_lower_bound(n).ln();
        let hi = soules_upper_bound(&y).map_err(|e| e.to_string())?.ln();
        ensure(lo <= per + 1e-9 && per <= hi + 1e-9, || format!("n={n}: {lo} ≤ {per} ≤ {hi} fails"))?;
    }
    Ok(())
}

fn exact_vs_enumeration() -> Check {
    for rows in [vec![2, 1], vec![3, 0, 1], vec![1, 1, 1, 1]] {
        let total: u64 = rows.iter().sum();
        for cols in [vec![total], vec![total - 1, 1], vec![1; total as usize]] {
            let m = Margins::new(rows.clone(), cols.clone()).map_err(|e| e.to_string())?;
            let a = exact_count(&m, DEFAULT_STATE_BUDGET).map_err(|e| e.to_string())?;
            let b = enumerate_count(&m).map_err(|e| e.to_string())?;
            ensure(a == b, || format!("{rows:?} × {cols:?}: {a} vs {b}"))?;
        }
    }
    Ok(())
}

fn exact_pins() -> Check {
    for (n, t, want) in [(2, 10, 11u64), (3, 2, 21), (3, 3, 55), (4, 4, 10147)] {
        let got = exact_count(&Margins::magic(n, t), DEFAULT_STATE_BUDGET).map_err(|e| e.to_string())?;
        ensure(got.to_u64() == Some(want), || format!("({n},{t}): {got}, want {want}"))?;
    }
    Ok(())
}

fn bounds_contain() -> Check {
    for n in 1..=3 {
        for t in 1..=4 {
            let spec = ProblemSpec::new(n, t).map_err(|e| e.to_string())?;
            let (lo, hi) = count_bounds(spec);
            let c = exact_count(&Margins::magic(n, t as u64), DEFAULT_STATE_BUDGET).map_err(|e| e.to_string())?.ln();
            ensure(lo.log_value <= c + 1e-9 && c <= hi.log_value + 1e-9, || format!("({n},{t}) outside bounds"))?;
        }
    }
    Ok(())
}

fn de_pin() -> Check {
    let v = de_heuristic(&Margins::magic(12, 8)).map_err(|e| e.to_string())?.log_value;
    let got = v.exp();
    ensure(within(got, 4.96e49, 0.02), || format!("{got:e}"))
}

fn bbk_pin() -> Check {
    let v = bbk_asymptotic(&Margins::magic(25, 5)).map_err(|e| e.to_string())?.log_value;
    let got = v / std::f64::consts::LN_10;
    let want = 6.17e108f64.log10();
    ensure((got - want).abs() < 0.02f64.ln_1p() / std::f64::consts::LN_10, || format!("10^{got}"))
}
