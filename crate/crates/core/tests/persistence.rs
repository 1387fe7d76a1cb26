mod common;

use std::fs;
use std::path::Path;

use gesturespot::persist::{load_model, model_files, save_model};
use gesturespot::recognizer::ClassifierKind;
use gesturespot::train::{train_recognizer, TrainConfig, TrainingSet};
use gesturespot::Error;

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    model_files().into_iter().map(|f| (f.display().to_string(), fs::read(dir.join(&f)).unwrap())).collect()
}

#[test]
fn round_trip_is_exact() {
    let model = &common::small().model;
    let dir = tempfile::tempdir().unwrap();
    save_model(dir.path(), model).unwrap();
    for f in model_files() {
        assert!(dir.path().join(&f).is_file(), "{}", f.display());
    }
    assert_eq!(&load_model(dir.path()).unwrap(), model.as_ref());
}

#[test]
fn corrupted_matrix_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    save_model(dir.path(), &common::small().model).unwrap();
    let p = dir.path().join("gestures").join("P.mat");
    let mut bytes = fs::read(&p).unwrap();
    bytes[17] ^= 0x01;
    fs::write(&p, bytes).unwrap();
    assert!(matches!(load_model(dir.path()), Err(Error::Checksum(path)) if path == p));
}

#[test]
fn consistent_but_wrong_projector_is_rejected() {
    // digest updated to match, so only the recomputed row can catch it
    let dir = tempfile::tempdir().unwrap();
    save_model(dir.path(), &common::small().model).unwrap();
    let part = dir.path().join("postures");
    let p = part.join("P.mat");
    let bytes: Vec<u8> = fs::read(&p).unwrap().chunks_exact(8).flat_map(|c| (f64::from_le_bytes(c.try_into().unwrap()) * 1.001).to_le_bytes()).collect();
    fs::write(&p, &bytes).unwrap();
    let manifest_path = part.join("manifest.toml");
    let mut manifest: toml::Table = toml::from_str(&fs::read_to_string(&manifest_path).unwrap()).unwrap();
    let digest: String = sha2_hex(&bytes);
    manifest["sha256"].as_table_mut().unwrap().insert("P.mat".into(), digest.into());
    fs::write(&manifest_path, toml::to_string(&manifest).unwrap()).unwrap();
    assert!(matches!(load_model(dir.path()), Err(Error::Checksum(_))));
}

fn sha2_hex(bytes: &[u8]) -> String {
    use sha2::Digest;
    sha2::Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[test]
fn missing_model_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let e = load_model(dir.path()).unwrap_err();
    assert!(matches!(e, Error::ModelFormat(_)));
    assert_eq!(e.exit_code(), 2);
}

#[test]
fn training_is_reproducible() {
    let set = TrainingSet::synthetic(6.0, common::TRAIN_NOISE, common::TRAIN_SEED).unwrap();
    let again = train_recognizer(&set, &TrainConfig::default()).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    save_model(a.path(), &common::small().model).unwrap();
    save_model(b.path(), &again.model).unwrap();
    assert_eq!(files(a.path()), files(b.path()));
}

#[test]
fn classifier_choice_only_changes_the_tag() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let model = &common::small().model;
    save_model(a.path(), model).unwrap();
    save_model(b.path(), &model.with_classifier(ClassifierKind::Src)).unwrap();
    for ((name, x), (_, y)) in files(a.path()).into_iter().zip(files(b.path())) {
        if name == "model.toml" {
            let diff: Vec<(&str, &str)> = std::str::from_utf8(&x).unwrap().lines().zip(std::str::from_utf8(&y).unwrap().lines()).filter(|(l, r)| l != r).collect();
            assert_eq!(diff, vec![("classifier = \"crc\"", "classifier = \"src\"")]);
        } else {
            assert_eq!(x, y, "{name}");
        }
    }
    assert_eq!(load_model(b.path()).unwrap().classifier, ClassifierKind::Src);
}
