//! Dataset persistence: bit-exact round trips and corruption handling.

use mechdis_core::error::CoreError;
use mechdis_core::synth::{generate_dataset, load_dataset, save_dataset, Variant};

#[test]
fn save_load_round_trip_is_bit_exact() {
    let (batch, meta, _) = generate_dataset(Variant::NonTrivialAction, 3, 6, 25, 2, 17).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&batch, &meta, dir.path()).unwrap();
    let (loaded, loaded_meta) = load_dataset(dir.path()).unwrap();
    assert_eq!(meta, loaded_meta);
    let bits = |xs: &[f64]| xs.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(batch.x.data()), bits(loaded.x.data()));
    assert_eq!(bits(batch.a.data()), bits(loaded.a.data()));
    assert_eq!(
        bits(batch.z.as_ref().unwrap().data()),
        bits(loaded.z.as_ref().unwrap().data())
    );
}

#[test]
fn truncated_bin_is_a_format_error() {
    let (batch, meta, _) = generate_dataset(Variant::TrivialTemporal, 2, 4, 10, 2, 18).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&batch, &meta, dir.path()).unwrap();
    let x_path = dir.path().join("x.bin");
    let bytes = std::fs::read(&x_path).unwrap();
    std::fs::write(&x_path, &bytes[..bytes.len() - 9]).unwrap();
    match load_dataset(dir.path()) {
        Err(CoreError::Format { path, .. }) => assert!(path.contains("x.bin")),
        other => panic!("expected format error, got {other:?}"),
    }
}

#[test]
fn missing_file_is_an_io_error_naming_it() {
    let (batch, meta, _) = generate_dataset(Variant::TrivialAction, 2, 4, 10, 2, 19).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&batch, &meta, dir.path()).unwrap();
    std::fs::remove_file(dir.path().join("a.bin")).unwrap();
    match load_dataset(dir.path()) {
        Err(CoreError::Io { path, .. }) => assert!(path.contains("a.bin")),
        other => panic!("expected io error, got {other:?}"),
    }
}

#[test]
fn metadata_reconstructs_the_graphs() {
    let (batch, meta, process) =
        generate_dataset(Variant::NonTrivialTemporal, 4, 8, 10, 2, 20).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&batch, &meta, dir.path()).unwrap();
    let (_, loaded_meta) = load_dataset(dir.path()).unwrap();
    assert_eq!(loaded_meta.graph_a().unwrap(), process.graph_a);
    assert_eq!(loaded_meta.graph_z().unwrap(), process.graph_z);
    assert_eq!(loaded_meta.variant, Variant::NonTrivialTemporal);
    assert_eq!(loaded_meta.sigma, process.sigma);
}
