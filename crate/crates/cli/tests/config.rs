use proptest::prelude::*;
use vlq_cli::config::GridChoice;
use vlq_cli::{parse_config, CliError};

fn base(extra: &str) -> String {
    format!("problem = \"zero-cost\"\nbeta = 0.75\nn = 16\nscenario = \"equivalence\"\n{extra}")
}

proptest! {
    #[test]
    fn matrices_read_back_row_major(values in prop::collection::vec(-1e3f64..1e3, 4)) {
        let list = values.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(", ");
        let cfg = parse_config(&base(&format!("state_dim = 2\nq = \"{list}\"\n"))).unwrap();
        let q = cfg.overrides.q.unwrap().matrix();
        prop_assert_eq!(q[(0, 0)], values[0]);
        prop_assert_eq!(q[(0, 1)], values[1]);
        prop_assert_eq!(q[(1, 0)], values[2]);
    }

    #[test]
    fn hash_is_a_function_of_the_content(seed in 0u64..10_000, n in 3usize..500) {
        let text = base(&format!("seed = {seed}\n")).replace("n = 16", &format!("n = {n}"));
        let a = parse_config(&text).unwrap();
        let b = parse_config(&format!("# again\n\n{text}")).unwrap();
        prop_assert_eq!(a.hash(), b.hash());
        let c = parse_config(&text.replace(&format!("seed = {seed}"), &format!("seed = {}", seed + 1))).unwrap();
        prop_assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn order_outside_the_unit_interval_is_refused(beta in prop_oneof![-5.0f64..=0.0, 1.0f64..5.0]) {
        let text = base("").replace("0.75", &format!("{beta:?}")).replace("equivalence", "example-2-1");
        let refused = matches!(parse_config(&text), Err(CliError::Config { ref field, .. }) if field == "beta");
        prop_assert!(refused);
    }
}

#[test]
fn graded_grid_takes_its_exponent() {
    let cfg = parse_config(&base("grid = \"graded\"\ngrading = 4\n")).unwrap();
    assert_eq!(cfg.grid, GridChoice::Graded { exponent: 4.0 });
    assert!(parse_config(&base("grading = 4\n")).is_err());
    assert!(parse_config(&base("grid = \"chebyshev\"\n")).is_err());
}

#[test]
fn missing_required_key_is_a_parse_error() {
    let text = "problem = \"zero-cost\"\nbeta = 0.75\nscenario = \"equivalence\"\n";
    match parse_config(text) {
        Err(CliError::Parse { message, .. }) => assert!(message.contains('n'), "{message}"),
        other => panic!("{other:?}"),
    }
}
