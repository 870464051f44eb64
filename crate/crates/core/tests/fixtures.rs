//! Checks against the reference descriptors in `fixtures/`.

use bksef_core::arch::{self, OpKind};
use bksef_core::cost::{self, oracle_macs_bruteforce};
use bksef_core::optimizer::{self, profile_weights, OptimizationConfig};
use bksef_core::report;
use bksef_core::{Gamma, KernelCandidates, NetworkSpec};

fn fixture(name: &str) -> NetworkSpec {
    let path = format!("{}/fixtures/{name}.json", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"));
    report::parse_spec(&text).unwrap_or_else(|e| panic!("{path}: {e}"))
}

const ALL: [&str; 7] =
    ["gtsrb_baseline", "gtsrb_dwsep", "gtsrb_free", "resnet18_baseline", "resnet18_case1", "resnet18_free", "tiny_free"];

#[test]
fn every_fixture_parses_and_roundtrips() {
    for name in ALL {
        let spec = fixture(name);
        assert_eq!(spec.name, name);
        assert_eq!(report::parse_spec(&report::emit_spec(&spec)).unwrap(), spec, "{name}");
    }
}

#[test]
fn gtsrb_baseline_totals_are_pinned() {
    let spec = fixture("gtsrb_baseline");
    let r = cost::network_cost(&spec).unwrap();
    assert_eq!(r.total_macs, 108_748_800);
    assert_eq!(r.total_params, 181_600);
    assert_eq!(r.model_size_bytes, 726_400);
    assert_eq!(arch::receptive_field_trace(&spec).unwrap().final_receptive_field(), 25);

    let shapes = arch::propagate_shapes(&spec).unwrap();
    for (layer, e) in spec.layers.iter().zip(&shapes.entries) {
        let per_layer = r.layers.iter().find(|l| l.layer_id == layer.id).unwrap();
        assert_eq!(per_layer.macs, oracle_macs_bruteforce(layer, e.input).unwrap(), "{}", layer.id);
    }
}

#[test]
fn gtsrb_dwsep_reduces_cost() {
    let c = report::compare(&fixture("gtsrb_baseline"), &fixture("gtsrb_dwsep")).unwrap();
    assert_eq!(c.macs_b, 5_075_712);
    assert_eq!(c.params_b, 8_443);
    assert!(c.mac_delta_percent.unwrap() <= -25.0);
    assert!(c.model_size_delta_percent.unwrap() <= -35.0);
    assert!(c.kernel_diff.iter().all(|d| d.changed));
}

#[test]
fn resnet_baseline_is_near_reference_cost() {
    let spec = fixture("resnet18_baseline");
    let macs = cost::network_cost(&spec).unwrap().total_macs;
    assert_eq!(macs, 1_698_181_632);
    let reference = 1.75e9;
    assert!((macs as f64 - reference).abs() / reference <= 0.15);
    assert_eq!(arch::propagate_shapes(&spec).unwrap().entries.last().unwrap().output.channels, 512);
}

#[test]
fn resnet_case1_increase_is_in_band() {
    let c = report::compare(&fixture("resnet18_baseline"), &fixture("resnet18_case1")).unwrap();
    let delta = c.mac_delta_percent.unwrap();
    assert!((10.0..=25.0).contains(&delta), "{delta}");
    assert_eq!(c.macs_b, 2_001_043_968);
    assert_eq!((c.params_a, c.params_b), (10_991_808, 13_248_192));
    let changed: Vec<&str> =
        c.kernel_diff.iter().filter(|d| d.changed).map(|d| d.a.as_ref().unwrap().id.as_str()).collect();
    assert_eq!(changed, ["conv1", "l2_b1_c1", "l4_b1_c1", "head_dw"]);
}

#[test]
fn non_conv_layers_cost_nothing() {
    let spec = fixture("resnet18_baseline");
    let r = cost::network_cost(&spec).unwrap();
    for (layer, c) in spec.layers.iter().zip(&r.layers) {
        if !layer.kind.is_conv() {
            assert_eq!((c.macs, c.params), (0, 0), "{}", layer.id);
        }
    }
    assert!(spec.layers.iter().any(|l| l.kind == OpKind::MaxPool));
}

#[test]
fn edge_profile_is_no_more_expensive_than_cloud() {
    for name in ["gtsrb_free", "resnet18_free", "tiny_free"] {
        let spec = fixture(name);
        let run = |profile: &str| {
            let config =
                OptimizationConfig::new(KernelCandidates::default(), profile_weights(profile).unwrap(), Gamma::default());
            optimizer::optimize_network(&spec, &config).unwrap().total_macs_after_repair
        };
        let (edge, cloud, balanced) = (run("edge"), run("cloud"), run("balanced"));
        assert!(edge <= cloud, "{name}: edge {edge} > cloud {cloud}");
        assert!(edge <= balanced && balanced <= cloud, "{name}");
    }
}

#[test]
fn analyze_refuses_free_kernels() {
    let err = report::analyze(&fixture("tiny_free"), 4).unwrap_err();
    assert!(err.is_invalid_spec(), "{err}");
}
