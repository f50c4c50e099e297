use heatcip::carleman_core::{zero_potential_derivative_stack, zero_potential_stack, BackgroundTerms};
use heatcip::forward_sim::log_heat_kernel;
use heatcip::geometry::{FieldStack, ScalarField, SpatialGrid, TimeGrid};
use heatcip::phantom::{letter_phantom, Letter, Phantom};
use heatcip::reconstruct::{accumulate_w, metrics, reconstruct, recover_coefficient, Metrics, RecoveryForm};
use proptest::prelude::*;

fn setup(nodes: usize, eps: f64, k: usize) -> (SpatialGrid, TimeGrid, BackgroundTerms) {
    let grid = SpatialGrid::standard(2, nodes).unwrap();
    let tg = TimeGrid::new(eps, 4.0, k).unwrap();
    let bg = BackgroundTerms::new(&grid, eps);
    (grid, tg, bg)
}

#[test]
fn zero_stack_accumulates_to_the_background() {
    let (grid, tg, bg) = setup(8, 0.01, 6);
    let w = accumulate_w(&FieldStack::zeros(&grid, 7), &bg, &tg).unwrap();
    for i in 0..7 {
        assert_eq!(w.layer(i), bg.w_eps.values());
    }
}

#[test]
fn constant_stack_accumulates_linearly() {
    let (grid, tg, bg) = setup(8, 0.01, 6);
    let kappa = 1.7;
    let v = FieldStack::from_vec(&grid, 7, vec![kappa; grid.len() * 7]).unwrap();
    let w = accumulate_w(&v, &bg, &tg).unwrap();
    for i in 0..7 {
        for p in 0..grid.len() {
            let expect = bg.w_eps.values()[p] + kappa * tg.h() * (i + 1) as f64;
            assert!((w.get(i, p) - expect).abs() < 1e-12 * expect.abs().max(1.0));
        }
    }
}

#[test]
fn analytic_stack_accumulates_to_the_log_kernel_at_first_order() {
    let grid = SpatialGrid::standard(2, 8).unwrap();
    let bg = BackgroundTerms::new(&grid, 0.5);
    let err = |k: usize| {
        let tg = TimeGrid::new(0.5, 4.0, k).unwrap();
        let w = accumulate_w(&zero_potential_derivative_stack(&grid, &tg), &bg, &tg).unwrap();
        (0..grid.len())
            .map(|p| (w.get(k, p) - log_heat_kernel(&grid.point(p)[..2], 4.0)).abs())
            .fold(0.0, f64::max)
    };
    let (a, b, c) = (err(20), err(40), err(80));
    assert!(a / b > 1.8 && b / c > 1.8, "{a} {b} {c}");
}

#[test]
fn stencil_stack_telescopes_to_the_log_kernel() {
    // h·Σ_{j≤i} (s_{j+1} − s_j)/h = s_{i+1} − s_0
    let (grid, tg, bg) = setup(8, 0.01, 20);
    let w = accumulate_w(&zero_potential_stack(&grid, &tg), &bg, &tg).unwrap();
    for i in 0..tg.k() {
        for p in 0..grid.len() {
            let exact = log_heat_kernel(&grid.point(p)[..2], tg.node(i + 1));
            assert!((w.get(i, p) - exact).abs() < 1e-9 * exact.abs().max(1.0));
        }
    }
}

#[test]
fn analytic_stack_recovers_zero_at_first_order() {
    let grid = SpatialGrid::standard(2, 20).unwrap();
    let bg = BackgroundTerms::new(&grid, 0.5);
    let err = |k: usize| {
        let tg = TimeGrid::new(0.5, 4.0, k).unwrap();
        let v = zero_potential_derivative_stack(&grid, &tg);
        let (a, _) = reconstruct(&v, None, &bg, &tg, RecoveryForm::W).unwrap();
        a.max_abs()
    };
    let (a, b, c) = (err(80), err(160), err(320));
    assert!(a / b > 1.8 && b / c > 1.8, "{a} {b} {c}");
}

#[test]
fn subtracting_the_reference_recovery_zeroes_the_reference() {
    let (grid, tg, bg) = setup(10, 0.01, 20);
    let r = zero_potential_stack(&grid, &tg);
    let (a, _) = reconstruct(&r, Some(&r), &bg, &tg, RecoveryForm::W).unwrap();
    assert_eq!(a.max_abs(), 0.0);
}

#[test]
fn time_constant_w_keeps_only_the_integral_term() {
    let (grid, tg, bg) = setup(8, 0.01, 5);
    let f = |x: &[f64]| x[0] * x[0] + 0.5 * x[1];
    let w = FieldStack::from_layers(&grid, vec![ScalarField::from_fn(&grid, f).into_values(); 6]).unwrap();
    // w_eps equal to the layers makes the first term vanish
    let bg = BackgroundTerms { w_eps: ScalarField::from_fn(&grid, f), ..bg };
    let a = recover_coefficient(&w, &FieldStack::zeros(&grid, 6), &bg, &tg, RecoveryForm::W).unwrap();
    let span = tg.t_final() - tg.epsilon();
    for p in grid.interior_nodes() {
        let x = grid.point(p);
        // Δf = 2, |∇f|² = 4x1² + 1/4, central differences are exact here
        let expect = -(tg.h() * 6.0 / span) * (2.0 + 4.0 * x[0] * x[0] + 0.25);
        assert!((a.values()[p] - expect).abs() < 1e-9, "{} vs {expect}", a.values()[p]);
    }
    for p in grid.boundary_nodes() {
        assert_eq!(a.values()[p], 0.0);
    }
}

#[test]
fn v_form_uses_the_stack_endpoints() {
    let (grid, tg, bg) = setup(8, 0.01, 5);
    let v = FieldStack::from_layers(&grid, (0..6).map(|i| vec![i as f64; grid.len()]).collect()).unwrap();
    let w = FieldStack::from_layers(&grid, vec![bg.w_eps.values().to_vec(); 6]).unwrap();
    let a = recover_coefficient(&w, &v, &bg, &tg, RecoveryForm::V).unwrap();
    let aw = recover_coefficient(&w, &v, &bg, &tg, RecoveryForm::W).unwrap();
    let span = tg.t_final() - tg.epsilon();
    let p = grid.interior_nodes()[3];
    assert!((a.values()[p] - aw.values()[p] - 5.0 / span).abs() < 1e-9);
}

#[test]
fn recovery_commutes_with_lattice_shifts() {
    let (grid, tg, bg) = setup(9, 0.3, 5);
    let s = grid.stride(0);
    let field = |p: usize, i: usize| {
        let x = grid.point(p);
        (x[0] * 1.3 + i as f64).sin() * (x[1] * 2.1).cos() + 0.1 * i as f64
    };
    let w = FieldStack::from_layers(&grid, (0..6).map(|i| (0..grid.len()).map(|p| field(p, i)).collect()).collect()).unwrap();
    // shifted[p] = original[p + e1]; the last x1 column is filled with junk
    let shift = |vals: &[f64]| -> Vec<f64> {
        (0..grid.len()).map(|p| if p + s < grid.len() { vals[p + s] } else { -7.0 }).collect()
    };
    let ws = FieldStack::from_layers(&grid, (0..6).map(|i| shift(w.layer(i))).collect()).unwrap();
    let bgs = BackgroundTerms { w_eps: ScalarField::new(grid.clone(), shift(bg.w_eps.values())).unwrap(), ..bg.clone() };
    let zero = FieldStack::zeros(&grid, 6);
    let a = recover_coefficient(&w, &zero, &bg, &tg, RecoveryForm::W).unwrap();
    let b = recover_coefficient(&ws, &zero, &bgs, &tg, RecoveryForm::W).unwrap();
    for p in grid.interior_nodes() {
        if grid.is_interior(p + s) {
            assert_eq!(b.values()[p], a.values()[p + s]);
        }
    }
}

#[test]
fn wrong_layer_count_is_an_error() {
    let (grid, tg, bg) = setup(8, 0.01, 5);
    let w = FieldStack::zeros(&grid, 5);
    assert!(recover_coefficient(&w, &w, &bg, &tg, RecoveryForm::W).is_err());
}

fn letter_b() -> Phantom {
    letter_phantom(&SpatialGrid::standard(2, 20).unwrap(), Letter::B, 2.0).unwrap()
}

#[test]
fn perfect_reconstruction_has_perfect_metrics() {
    let p = letter_b();
    let m = metrics(p.values(), &p, false).unwrap();
    assert_eq!(m.rel_l2_err, 0.0);
    assert_eq!(m.iou_at_half_max, 1.0);
    assert_eq!(m.centroid_offset, 0.0);
    assert_eq!(m.max_value, 2.0);
    assert_eq!(m.max_value_rel_err, 0.0);
}

#[test]
fn zero_reconstruction_has_unit_relative_error() {
    let p = letter_b();
    let m = metrics(&ScalarField::zeros(p.grid()), &p, false).unwrap();
    assert_eq!(m.rel_l2_err, 1.0);
    assert_eq!(m.iou_at_half_max, 0.0);
    assert!(m.centroid_offset.is_nan());
}

#[test]
fn one_node_shift_gives_brute_force_iou_and_one_spacing_offset() {
    let p = letter_b();
    let grid = p.grid();
    let s = grid.stride(1);
    let vals = p.values().values();
    let shifted: Vec<f64> = (0..grid.len()).map(|i| if i >= s { vals[i - s] } else { 0.0 }).collect();
    let m = metrics(&ScalarField::new(grid.clone(), shifted.clone()).unwrap(), &p, false).unwrap();
    let (mut inter, mut union) = (0, 0);
    for i in 0..grid.len() {
        let a = shifted[i] >= 1.0 && grid.is_interior(i);
        let b = p.mask()[i];
        inter += (a && b) as usize;
        union += (a || b) as usize;
    }
    assert_eq!(m.iou_at_half_max, inter as f64 / union as f64);
    assert!((m.centroid_offset - grid.spacing(1)).abs() < 1e-12);
}

#[test]
fn clipping_ignores_negative_lobes() {
    let p = letter_b();
    let mut vals = p.values().values().to_vec();
    let outside = p.grid().interior_nodes().into_iter().find(|&i| !p.mask()[i]).unwrap();
    vals[outside] = -5.0;
    let f = ScalarField::new(p.grid().clone(), vals).unwrap();
    assert!(metrics(&f, &p, false).unwrap().rel_l2_err > 0.0);
    assert_eq!(metrics(&f, &p, true).unwrap().rel_l2_err, 0.0);
}

#[test]
fn metrics_need_matching_grids() {
    let p = letter_b();
    let other = SpatialGrid::standard(2, 21).unwrap();
    assert!(metrics(&ScalarField::zeros(&other), &p, false).is_err());
}

#[test]
fn zero_phantom_and_zero_field_score_as_empty_sets() {
    let grid = SpatialGrid::standard(2, 10).unwrap();
    let m = metrics(&ScalarField::zeros(&grid), &Phantom::zero(&grid), false).unwrap();
    assert_eq!(m.rel_l2_err, 0.0);
    assert_eq!(m.iou_at_half_max, 1.0);
}

#[test]
fn metrics_text_round_trips() {
    let m = Metrics {
        rel_l2_err: 0.31,
        max_value: 2.04,
        max_value_rel_err: 0.02,
        iou_at_half_max: 0.5,
        centroid_offset: f64::NAN,
    };
    let back = Metrics::from_text(&m.to_text()).unwrap();
    assert_eq!(back.values()[..4], m.values()[..4]);
    assert!(back.centroid_offset.is_nan());
    assert!(Metrics::from_text("rel_l2_err = 1\n").is_err());
    assert!(Metrics::from_text("rel_l2_err 1\n").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn metrics_depend_only_on_the_fields(seed in any::<u64>(), clip in any::<bool>()) {
        let p = letter_b();
        let vals: Vec<f64> = (0..p.grid().len()).map(|i| (((i as u64) ^ seed) % 17) as f64 / 4.0 - 1.0).collect();
        let f = ScalarField::new(p.grid().clone(), vals).unwrap();
        let a = metrics(&f, &p, clip).unwrap();
        let b = metrics(&f.clone(), &p.clone(), clip).unwrap();
        prop_assert_eq!(a.to_text(), b.to_text());
        prop_assert!((0.0..=1.0).contains(&a.iou_at_half_max));
        prop_assert!(a.rel_l2_err >= 0.0);
    }
}
