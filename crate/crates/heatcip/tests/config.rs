use heatcip::config::{InverseConfig, ReferenceMode, ScalingName};
use heatcip::optimizer::Method;
use heatcip::Error;
use proptest::prelude::*;

fn field_of(e: Error) -> String {
    match e {
        Error::Validation { field, .. } => field,
        other => panic!("expected a validation error, got {other}"),
    }
}

#[test]
fn defaults_are_the_tuned_set() {
    let c = InverseConfig::default();
    assert_eq!(c.time.t_final, 4.0);
    assert_eq!(c.time.nt, 20);
    assert_eq!(c.time.epsilon, 0.01);
    assert_eq!(c.carleman.alpha, 3e-5);
    assert_eq!(c.carleman.lambda, 3.0);
    assert_eq!(c.carleman.c, 5.0);
    assert_eq!(c.carleman.reg_order, 3);
    assert_eq!(c.optimizer.grad_tol, 0.01);
    assert_eq!(c.optimizer().method, Method::Lbfgs);
    let g = c.grid().unwrap();
    assert_eq!((g.count(0), g.count(1)), (20, 20));
    c.validate().unwrap();
}

#[test]
fn empty_file_is_the_default() {
    assert_eq!(InverseConfig::from_toml("").unwrap(), InverseConfig::default());
}

#[test]
fn sections_override_single_keys() {
    let c = InverseConfig::from_toml("[time]\nnt = 40\n[carleman]\nscaling = \"raw\"\nreference = \"none\"\n").unwrap();
    assert_eq!(c.time.nt, 40);
    assert_eq!(c.time.t_final, 4.0);
    assert_eq!(c.carleman.scaling, ScalingName::Raw);
    assert_eq!(c.carleman.reference, ReferenceMode::None);
}

#[test]
fn epsilon_not_below_t_final_is_a_validation_error() {
    let mut c = InverseConfig::default();
    c.time.epsilon = 4.0;
    let e = c.validate().unwrap_err();
    assert!(e.is_user_error());
    assert_eq!(field_of(e), "time.epsilon");
}

#[test]
fn unknown_keys_are_parse_errors_with_an_offset() {
    let text = "[time]\nnt = 20\nbogus = 1\n";
    match InverseConfig::from_toml(text).unwrap_err() {
        Error::Parse { offset, message } => {
            assert!(message.contains("bogus"), "{message}");
            assert!(offset <= text.find("bogus").unwrap() + 5);
        }
        other => panic!("{other}"),
    }
}

#[test]
fn wrong_types_are_parse_errors() {
    assert!(matches!(InverseConfig::from_toml("[time]\nnt = \"many\"\n"), Err(Error::Parse { .. })));
}

#[test]
fn set_parses_values_as_toml() {
    let mut c = InverseConfig::default();
    c.set("carleman.lambda", "2").unwrap();
    c.set("grid.nodes", "[10, 12]").unwrap();
    c.set("phantom.letter", "SZ").unwrap();
    c.set("output_dir", "runs/x").unwrap();
    assert_eq!(c.carleman.lambda, 2.0);
    assert_eq!(c.grid.nodes, vec![10, 12]);
    assert_eq!(c.phantom.letter, "SZ");
    assert_eq!(c.output_dir.to_str(), Some("runs/x"));
    assert!(c.set("carleman.nope", "1").is_err());
    assert!(c.set("a.b.c", "1").is_err());
    assert!(c.set("time.nt", "ten").is_err());
}

#[test]
fn environment_overrides_use_the_prefix() {
    let mut c = InverseConfig::default();
    let vars = vec![
        ("HEATCIP_CARLEMAN__LAMBDA".to_string(), "5".to_string()),
        ("HEATCIP_NOISE__SEED".to_string(), "77".to_string()),
        ("OTHER_TIME__NT".to_string(), "3".to_string()),
    ];
    c.apply_env(vars).unwrap();
    assert_eq!(c.carleman.lambda, 5.0);
    assert_eq!(c.noise.seed, 77);
    assert_eq!(c.time.nt, 20);
    assert!(c.apply_env(vec![("HEATCIP_TIME__NT".into(), "x".into())]).is_err());
}

#[test]
fn snapshot_reloads_to_the_same_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = InverseConfig::default();
    c.noise.sigma = 0.03;
    c.noise.seed = 12345;
    c.forward.center = Some(vec![0.5, -0.25]);
    c.phantom.image = Some("glyph.pgm".into());
    let path = dir.path().join("config.toml");
    c.write_snapshot(&path).unwrap();
    assert_eq!(InverseConfig::load(&path).unwrap(), c);
}

#[test]
fn validation_errors_name_the_key() {
    let cases: Vec<(&str, &str, &str)> = vec![
        ("noise.sigma", "1.0", "noise.sigma"),
        ("grid.n", "4", "grid.n"),
        ("grid.nodes", "[20, 20, 20]", "grid.nodes"),
        ("time.nt", "3", "time.nt"),
        ("phantom.amplitude", "-1", "phantom.amplitude"),
        ("forward.mesh", "0", "forward.mesh"),
        ("forward.record_from", "0.5", "forward.record_from"),
        ("forward.center", "[1.0]", "forward.center"),
    ];
    for (key, raw, field) in cases {
        let mut c = InverseConfig::default();
        c.set(key, raw).unwrap();
        assert_eq!(field_of(c.validate().unwrap_err()), field, "{key}={raw}");
    }
}

#[test]
fn zero_phantom_and_letters_are_accepted() {
    let mut c = InverseConfig::default();
    let grid = c.grid().unwrap();
    c.phantom.letter = "zero".into();
    assert_eq!(c.phantom(&grid).unwrap().mask_count(), 0);
    c.phantom.letter = "L".into();
    assert!(c.phantom(&grid).unwrap().mask_count() > 0);
    c.phantom.letter = "Q".into();
    assert!(c.validate().is_err());
}

#[test]
fn three_dimensional_grids_broadcast_bounds() {
    let mut c = InverseConfig::default();
    c.grid.n = 3;
    c.grid.nodes = vec![12];
    let g = c.grid().unwrap();
    assert_eq!((g.dim(), g.count(0), g.count(2)), (3, 12, 12));
    assert_eq!(g.domain().hi(2), 2.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn toml_round_trip_is_lossless(
        lambda in 0.1f64..10.0,
        alpha in 1e-8f64..1.0,
        nt in 4usize..80,
        seed in any::<u64>(),
        sigma in 0.0f64..0.99,
    ) {
        let mut c = InverseConfig::default();
        c.carleman.lambda = lambda;
        c.carleman.alpha = alpha;
        c.time.nt = nt;
        c.noise.seed = seed;
        c.noise.sigma = sigma;
        prop_assert_eq!(InverseConfig::from_toml(&c.to_toml()).unwrap(), c);
    }
}
