use otlaplace::measures::EmpiricalMeasure;
use otlaplace::rates::w2_uniform_exact;
use otlaplace::transport::{brute_force_ot, discrete_ot, w2_exact, winf, CostMatrix, Exponent};
use proptest::prelude::*;

fn cloud(max_m: usize, max_k: usize) -> impl Strategy<Value = EmpiricalMeasure> {
    (1..=max_m, 1..=max_k).prop_flat_map(|(m, k)| {
        prop::collection::vec(-5.0f64..5.0, m * k).prop_map(move |c| EmpiricalMeasure::from_flat(c, k).unwrap())
    })
}

fn pair(max_m: usize, max_k: usize) -> impl Strategy<Value = (EmpiricalMeasure, EmpiricalMeasure)> {
    (1..=max_m, 1..=max_k).prop_flat_map(|(m, k)| {
        let side = move || prop::collection::vec(-5.0f64..5.0, m * k).prop_map(move |c| EmpiricalMeasure::from_flat(c, k).unwrap());
        (side(), side())
    })
}

fn triple(max_m: usize, max_k: usize) -> impl Strategy<Value = [EmpiricalMeasure; 3]> {
    (1..=max_m, 1..=max_k).prop_flat_map(|(m, k)| {
        let side = move || prop::collection::vec(-5.0f64..5.0, m * k).prop_map(move |c| EmpiricalMeasure::from_flat(c, k).unwrap());
        (side(), side(), side()).prop_map(|(a, b, c)| [a, b, c])
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn w2_matches_enumeration((mu, nu) in pair(6, 3)) {
        let (d, plan) = w2_exact(&mu, &nu).unwrap();
        let oracle = brute_force_ot(&mu, &nu, Exponent::Finite(2.0)).unwrap();
        prop_assert!((d - oracle).abs() <= 1e-9 * oracle.max(1.0));
        let mass = 1.0 / mu.len() as f64;
        for r in plan.row_marginals().iter().chain(&plan.column_marginals()) {
            prop_assert!((r - mass).abs() <= 1e-12);
        }
    }

    #[test]
    fn winf_matches_enumeration((mu, nu) in pair(6, 3)) {
        let d = winf(&mu, &nu).unwrap();
        let oracle = brute_force_ot(&mu, &nu, Exponent::Infinity).unwrap();
        prop_assert_eq!(d, oracle);
        prop_assert!(w2_exact(&mu, &nu).unwrap().0 <= d + 1e-12);
    }

    #[test]
    fn metric_axioms([a, b, c] in triple(5, 3)) {
        let ab = w2_exact(&a, &b).unwrap().0;
        let ba = w2_exact(&b, &a).unwrap().0;
        let bc = w2_exact(&b, &c).unwrap().0;
        let ac = w2_exact(&a, &c).unwrap().0;
        prop_assert!((ab - ba).abs() <= 1e-12 * ab.max(1.0));
        prop_assert!(ac <= ab + bc + 1e-9);
        prop_assert_eq!(w2_exact(&a, &a).unwrap().0, 0.0);
    }

    #[test]
    fn translation_shifts_distance(mu in cloud(6, 3), shift in prop::collection::vec(-3.0f64..3.0, 3)) {
        let s = &shift[..mu.dim()];
        let nu = mu.translated(s).unwrap();
        let d = w2_exact(&mu, &nu).unwrap().0;
        let norm = s.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((d - norm).abs() <= 1e-9 * norm.max(1.0));
    }

    #[test]
    fn unequal_sizes_match_general_solver(a in prop::collection::vec(-5.0f64..5.0, 2..6), b in prop::collection::vec(-5.0f64..5.0, 2..6)) {
        // embed in the plane to skip the sorted one-dimensional path
        let mu = EmpiricalMeasure::from_flat(a.iter().flat_map(|x| [*x, 0.0]).collect(), 2).unwrap();
        let nu = EmpiricalMeasure::from_flat(b.iter().flat_map(|x| [*x, 0.0]).collect(), 2).unwrap();
        let planar = w2_exact(&mu, &nu).unwrap().0;
        let line = w2_exact(
            &EmpiricalMeasure::from_flat(a.clone(), 1).unwrap(),
            &EmpiricalMeasure::from_flat(b.clone(), 1).unwrap(),
        ).unwrap().0;
        prop_assert!((planar - line).abs() <= 1e-9 * line.max(1.0));
        let cost = CostMatrix::from_fn(a.len(), b.len(), |i, j| (a[i] - b[j]).powi(2));
        let plan = discrete_ot(&cost, &vec![1.0 / a.len() as f64; a.len()], &vec![1.0 / b.len() as f64; b.len()]).unwrap();
        prop_assert!((plan.total_cost.sqrt() - line).abs() <= 1e-9 * line.max(1.0));
    }
}

#[test]
fn uniform_closed_form_matches_fine_quantile_grid() {
    let big = 100_000;
    let quantiles: Vec<f64> = (0..big).map(|j| (j as f64 + 0.5) / big as f64).collect();
    let fine = EmpiricalMeasure::from_flat(quantiles, 1).unwrap();
    let mut rng = otlaplace::rng::rng(11);
    for m in [5, 17, 64] {
        let mut sample: Vec<f64> = (0..m).map(|_| rand::Rng::random::<f64>(&mut rng)).collect();
        let empirical = EmpiricalMeasure::from_flat(sample.clone(), 1).unwrap();
        let exact = w2_uniform_exact(&mut sample);
        let discrete = w2_exact(&fine, &empirical).unwrap().0;
        assert!((exact - discrete).abs() <= 1e-3 * exact, "m = {m}: {exact} vs {discrete}");
    }
}
