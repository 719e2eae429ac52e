use std::path::PathBuf;

use convbound_core::io::{decode_binary, encode_binary, encode_json};
use convbound_core::{load_filter, random_filter, save_filter, Error, Filter4D, FilterDims, FilterFormat};
use proptest::prelude::*;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn worked_fixture_loads() {
    let f = load_filter(fixture("worked_1x1x1x3.cft1"), FilterFormat::Binary).unwrap();
    assert_eq!(f.dims(), FilterDims::new(1, 1, 1, 3));
    assert_eq!(f.values(), &[1.0, 2.0, -1.0]);
}

#[test]
fn json_fixture_loads() {
    let f = load_filter(fixture("identity_1x1x1x1.json"), FilterFormat::Json).unwrap();
    assert_eq!(f.values(), &[1.0]);
}

// The fixtures were written by an independent implementation of the
// documented generator (xoshiro256++ / SplitMix64 seeding / Box-Muller).
// Transcendentals may differ by an ulp across libm builds, so values are
// compared in ulps; the header must match exactly.
#[test]
fn generator_matches_shipped_fixtures() {
    for (name, dims, seed) in [
        ("normal_64x3x7x7_seed0.cft1", FilterDims::new(64, 3, 7, 7), 0),
        ("normal_2x3x3x3_seed42.cft1", FilterDims::new(2, 3, 3, 3), 42),
    ] {
        let generated = random_filter(dims, seed).unwrap();
        let bytes = std::fs::read(fixture(name)).unwrap();
        assert_eq!(encode_binary(&generated)[..20], bytes[..20], "{name}");
        let shipped = decode_binary(&bytes).unwrap();
        for (i, (a, b)) in generated.values().iter().zip(shipped.values()).enumerate() {
            let ulps = (a.to_bits() as i64 - b.to_bits() as i64).unsigned_abs();
            assert!(ulps <= 2, "{name}[{i}]: {a:e} vs {b:e}");
        }
    }
}

#[test]
fn round_trip_large_filter_both_formats() {
    let f = random_filter(FilterDims::new(64, 3, 7, 7), 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for (name, format) in [("f.cft1", FilterFormat::Binary), ("f.json", FilterFormat::Json)] {
        let path = dir.path().join(name);
        save_filter(&f, &path, format).unwrap();
        let back = load_filter(&path, format).unwrap();
        let a: Vec<u64> = f.values().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = back.values().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b, "{name}");
        assert_eq!(back.dims(), f.dims());
    }
}

#[test]
fn write_into_missing_directory_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let f = random_filter(FilterDims::new(1, 1, 1, 1), 0).unwrap();
    let path = dir.path().join("no/such/dir/f.cft1");
    assert!(matches!(save_filter(&f, &path, FilterFormat::Binary), Err(Error::Io { .. })));
}

#[cfg(unix)]
#[test]
fn write_to_read_only_location_is_io_error() {
    use std::os::unix::fs::PermissionsExt;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ro.cft1");
    std::fs::write(&path, b"").unwrap();
    std::fs::set_permissions(&path, std::fs::Permissions::from_mode(0o444)).unwrap();
    // root ignores permission bits; only assert when the write really fails.
    let f = random_filter(FilterDims::new(1, 1, 1, 3), 0).unwrap();
    if std::fs::OpenOptions::new().write(true).open(&path).is_err() {
        assert!(matches!(save_filter(&f, &path, FilterFormat::Binary), Err(Error::Io { .. })));
    }
    // A directory path is never writable as a file.
    assert!(matches!(save_filter(&f, dir.path(), FilterFormat::Binary), Err(Error::Io { .. })));
}

#[test]
fn missing_file_is_io_error() {
    let err = load_filter(fixture("does_not_exist.cft1"), FilterFormat::Binary).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
}

fn any_filter() -> impl Strategy<Value = Filter4D> {
    (1usize..4, 1usize..4, 1usize..4, 1usize..4).prop_flat_map(|(a, b, c, d)| {
        let dims = FilterDims::new(a, b, c, d);
        prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), dims.len())
            .prop_map(move |values| Filter4D::new(dims, values).unwrap())
    })
}

proptest! {
    #[test]
    fn binary_round_trip_is_bit_exact(f in any_filter()) {
        let back = decode_binary(&encode_binary(&f)).unwrap();
        prop_assert_eq!(back.dims(), f.dims());
        for (a, b) in back.values().iter().zip(f.values()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn json_round_trip_is_bit_exact(f in any_filter()) {
        let back = convbound_core::io::decode_json(&encode_json(&f)).unwrap();
        for (a, b) in back.values().iter().zip(f.values()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
