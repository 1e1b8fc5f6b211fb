//! File formats: binary tag files, curve and histogram CSVs with JSON
//! sidecars, and the versioned run configuration.

use fluorcorr::config::RunConfig;
use fluorcorr::correlator::Histogram;
use fluorcorr::error::Error;
use fluorcorr::io::{histogram_metadata, read_curve, read_histogram, write_curve, write_histogram, CurveMetadata};
use fluorcorr::liouville::{CorrelationCurve, CurveKind};
use fluorcorr::tagfile;
use fluorcorr::trajectory::{Channel, ClickStream};
use proptest::prelude::*;
use serde_json::{json, Value};

fn click_stream() -> impl Strategy<Value = ClickStream> {
    (
        prop_oneof![Just(Channel::Start), Just(Channel::Stop)],
        1u32..10_000,
        any::<u64>(),
        prop::collection::vec(any::<u64>(), 0..200),
    )
        .prop_map(|(channel, quantization_ps, seed, mut tags)| {
            tags.sort_unstable();
            let duration = tags.last().map_or(1, |&t| t.saturating_add(1));
            ClickStream {
                channel,
                quantization_ps,
                duration,
                seed,
                tags,
            }
        })
}

proptest! {
    #[test]
    fn tag_files_round_trip(stream in click_stream()) {
        let bytes = tagfile::encode(&stream);
        prop_assert_eq!(&bytes[..6], b"DCTAG1");
        prop_assert_eq!(tagfile::decode(&bytes).unwrap(), stream);
    }

    #[test]
    fn truncated_tag_files_are_rejected(stream in click_stream(), cut in 1usize..64) {
        let bytes = tagfile::encode(&stream);
        let keep = bytes.len().saturating_sub(cut);
        prop_assert!(matches!(tagfile::decode(&bytes[..keep]), Err(Error::Format(_))));
    }

    #[test]
    fn curves_round_trip_exactly(
        values in prop::collection::vec(-1e3..1e3f64, 1..100),
        phase in prop::option::of(-3.2..3.2f64),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.csv");
        let n = values.len();
        let curve = CorrelationCurve {
            kind: CurveKind::GTotal,
            tau: (0..n).map(|i| i as f64 * 1e-9 + 3e-13).collect(),
            stderr: values.iter().map(|v| v.abs() / 7.0).collect(),
            values,
            phase,
            normalizer: Some(1.234e5),
        };
        let meta = CurveMetadata::for_curve(&curve, "test");
        write_curve(&path, &curve, &meta).unwrap();
        let (back, back_meta) = read_curve(&path).unwrap();
        prop_assert_eq!(back, curve);
        prop_assert_eq!(back_meta, meta);
    }
}

#[test]
fn tag_file_corruption_is_detected() {
    let stream = ClickStream {
        channel: Channel::Stop,
        quantization_ps: 100,
        duration: 1000,
        seed: 5,
        tags: vec![1, 5, 5, 900],
    };
    let good = tagfile::encode(&stream);
    let mut bad_magic = good.clone();
    bad_magic[0] = b'X';
    let mut bad_version = good.clone();
    bad_version[6] = 9;
    let mut bad_channel = good.clone();
    bad_channel[8] = 7;
    let mut decreasing = good.clone();
    let last = decreasing.len() - 8;
    decreasing[last..].copy_from_slice(&2u64.to_le_bytes());
    let mut extra = good.clone();
    extra.push(0);
    for bytes in [bad_magic, bad_version, bad_channel, decreasing, extra] {
        assert!(matches!(tagfile::decode(&bytes), Err(Error::Format(_))));
    }
}

#[test]
fn tag_files_carry_the_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("start.dctag");
    let stream = ClickStream {
        channel: Channel::Start,
        quantization_ps: 100,
        duration: 10,
        seed: 1,
        tags: vec![0, 3, 9],
    };
    assert_eq!(tagfile::read_config_hash(&path).unwrap(), None);
    tagfile::write(&path, &stream, "0123abcd").unwrap();
    assert_eq!(tagfile::read(&path).unwrap(), stream);
    assert_eq!(tagfile::read_config_hash(&path).unwrap().as_deref(), Some("0123abcd"));
}

#[test]
fn histograms_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("hist.csv");
    let h = Histogram {
        quantization_ps: 100,
        bin_tags: 10,
        counts: vec![0, 7, 123_456_789_012, 3],
        n_starts: 99,
        n_stops: 1234,
        duration: 0.25,
    };
    let meta = histogram_metadata(&h, Some(1.5));
    write_histogram(&path, &h, &meta).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("tau_s,counts\n"));
    let (back, back_meta) = read_histogram(&path).unwrap();
    assert_eq!(back, h);
    assert_eq!(back_meta, meta);
}

#[test]
fn curve_with_wrong_header_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.csv");
    let curve = CorrelationCurve::theory(CurveKind::G2, vec![0.0, 1e-9], vec![0.0, 0.5], None);
    write_curve(&path, &curve, &CurveMetadata::for_curve(&curve, "t")).unwrap();
    std::fs::write(&path, "tau,value\n0,0\n").unwrap();
    assert!(matches!(read_curve(&path), Err(Error::Format(_))));
}

#[test]
fn configs_round_trip_with_a_stable_hash() {
    for name in ["fig2", "fig4", "two_level"] {
        let cfg = RunConfig::preset(name).unwrap();
        let back = RunConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 16);
    }
    let mut other = RunConfig::preset("fig2").unwrap();
    let hash = other.hash();
    other.simulation.seed += 1;
    assert_ne!(other.hash(), hash);
}

/// Apply `edit` to the JSON of the two-level preset and return the
/// configuration error message.
fn config_error(edit: impl FnOnce(&mut Value)) -> String {
    let mut v: Value = serde_json::from_str(&RunConfig::preset("two_level").unwrap().to_json()).unwrap();
    edit(&mut v);
    match RunConfig::from_json(&v.to_string()) {
        Err(Error::Config(msg)) => msg,
        other => panic!("expected a configuration error, got {other:?}"),
    }
}

#[test]
fn config_errors_name_the_field() {
    let msg = config_error(|v| v["atom"]["rabi_hz"] = json!(-1.0));
    assert!(msg.starts_with("atom.rabi_hz:"), "{msg}");

    let msg = config_error(|v| v["detection"]["gamma1"] = json!(-5.0));
    assert!(msg.starts_with("detection.gamma1:"), "{msg}");

    let msg = config_error(|v| v["version"] = json!(2));
    assert!(msg.starts_with("version:"), "{msg}");

    let msg = config_error(|v| v["simulation"]["duration_s"] = json!("long"));
    assert!(msg.starts_with("simulation.duration_s:"), "{msg}");

    let msg = config_error(|v| v["detection"]["phases"] = json!([]));
    assert!(msg.starts_with("detection.phases:"), "{msg}");

    let msg = config_error(|v| v["detection"]["colour"] = json!("green"));
    assert!(msg.contains("detection") && msg.contains("colour"), "{msg}");

    let msg = config_error(|v| v["atom"]["model"] = json!("hydrogen"));
    assert!(msg.contains("hydrogen"), "{msg}");
}
