//! End-to-end examples of the experiment runner.

use whisper_core::deconv::DeconvMethod;
use whisper_core::experiment::{
    run, run_deconv_eval, run_protocol_compare, run_traffic, ExperimentConfig, Scenario,
};
use whisper_core::protocol::KeyScheme;

#[test]
fn one_config_one_method_is_one_row() {
    let mut cfg = ExperimentConfig::new(Scenario::DeconvEval);
    cfg.n_configs = 1;
    cfg.snr_list = vec![20.0];
    cfg.methods = vec![DeconvMethod::Map(0.01)];
    let rows = run_deconv_eval(&cfg).unwrap();
    assert_eq!(rows.len(), 1);
    let r = &rows[0];
    assert!(r.rmse >= 0.0 && r.rmse_normalized >= 0.0);
    assert!((-1.0..=1.0).contains(&r.corrcoef));
    assert_eq!(r.effective_lambda, Some(0.01));
}

#[test]
fn reruns_are_byte_identical() {
    let mut cfg = ExperimentConfig::new(Scenario::ProtocolCompare);
    cfg.seed = 3;
    cfg.n_configs = 2;
    cfg.snr_list = vec![20.0];
    cfg.gb_list = vec![0.0, 0.1];
    cfg.budget = 14;
    let mut a = Vec::new();
    let mut b = Vec::new();
    run(&cfg, &mut a).unwrap();
    cfg.threads = Some(1);
    run(&cfg, &mut b).unwrap();
    assert_eq!(a, b);
}

#[test]
fn one_ckg_round_budget_leaves_ckd_empty() {
    let mut cfg = ExperimentConfig::new(Scenario::ProtocolCompare);
    cfg.n_configs = 1;
    cfg.snr_list = vec![30.0];
    cfg.gb_list = vec![0.1];
    cfg.budget = 10;
    let rows = run_protocol_compare(&cfg).unwrap();
    assert_eq!((rows[0].ckg_rounds, rows[0].ckd_rounds), (1, 0));
    assert_eq!((rows[0].ckd_key_bits, rows[0].ckd_bit_match), (0, None));
}

#[test]
fn traffic_rows_match_hand_formulas() {
    let mut cfg = ExperimentConfig::new(Scenario::Traffic);
    cfg.node_range = (3, 10);
    let rows = run_traffic(&cfg).unwrap();
    assert_eq!(rows.len(), 16);
    for r in rows {
        let n = r.node_count;
        let want = match r.scheme {
            KeyScheme::Ckd => n + n * (n - 1) + n * (n - 1) / 2 + (n - 1),
            KeyScheme::Ckg => n + n * ((n - 1) * (n - 2) / 2) + n + 1,
        };
        assert_eq!(r.total, want, "N={n} {}", r.scheme);
    }
    cfg.node_range = (2, 5);
    assert!(run_traffic(&cfg).is_err());
}
