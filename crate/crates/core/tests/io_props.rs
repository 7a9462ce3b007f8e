use proptest::prelude::*;
use spd_core::debias::{DebiasArtifact, NeutralMean, SelectionMode, SfidArtifact, SpdArtifact};
use spd_core::inlp::{BiasSubspaceArtifact, StopReason};
use spd_core::io::{
    decode_artifact, decode_embeddings, encode_artifact, encode_embeddings, format_labels, parse_labels, Dtype,
    EmbeddingFile,
};
use spd_core::linalg::{Matrix, OrthonormalBasis};
use spd_core::models::LabelVector;
use spd_core::synth::random_basis;

fn embeddings() -> impl Strategy<Value = EmbeddingFile> {
    (1usize..12, 1usize..10, any::<bool>()).prop_flat_map(|(n, d, wide)| {
        prop::collection::vec(-1e6f64..1e6, n * d).prop_map(move |v| {
            // f32 files only hold values that survive narrowing
            let (v, dtype) = if wide {
                (v, Dtype::F64)
            } else {
                (v.into_iter().map(|x| x as f32 as f64).collect(), Dtype::F32)
            };
            EmbeddingFile {
                matrix: Matrix::new(n, d, v).unwrap(),
                dtype,
            }
        })
    })
}

fn stop_reason() -> impl Strategy<Value = StopReason> {
    prop_oneof![
        Just(StopReason::ChanceReached),
        Just(StopReason::TargetReached),
        Just(StopReason::IterationCap),
    ]
}

fn selection_mode() -> impl Strategy<Value = SelectionMode> {
    prop_oneof![Just(SelectionMode::Threshold), Just(SelectionMode::BottomPercent)]
}

fn spd_artifact() -> impl Strategy<Value = SpdArtifact> {
    (1usize..10)
        .prop_flat_map(|d| (Just(d), 0..=d, any::<u64>(), prop::collection::vec(-10.0f64..10.0, d)))
        .prop_flat_map(|(d, k, seed, neutral)| {
            (
                Just((d, k, seed, neutral)),
                "[a-z]{0,8}",
                2usize..5,
                prop::collection::vec(0.0f64..=1.0, 0..5),
                prop::collection::vec(0usize..4, 0..5),
                stop_reason(),
                selection_mode(),
                0.0f64..1.0,
                0usize..1000,
                any::<bool>(),
            )
        })
        .prop_map(|((d, k, seed, neutral), name, c, trail, dirs, stop, mode, tau, n_sel, reinject)| {
            let basis = if k == 0 {
                OrthonormalBasis::empty(d)
            } else {
                random_basis(d, k, seed, None).unwrap()
            };
            let subspace = BiasSubspaceArtifact {
                basis,
                attribute_name: name.clone(),
                per_iteration_accuracy: trail,
                directions_per_iteration: dirs,
                class_count: c,
                stop_reason: stop,
            };
            let neutral = NeutralMean {
                vector: neutral,
                selection_mode: mode,
                tau,
                n_selected: n_sel,
                attribute_name: name,
            };
            SpdArtifact::new(subspace, neutral, reinject).unwrap()
        })
}

fn sfid_artifact() -> impl Strategy<Value = SfidArtifact> {
    (1usize..12)
        .prop_flat_map(|d| {
            (
                Just(d),
                prop::sample::subsequence((0..d).collect::<Vec<_>>(), 0..=d),
                prop::collection::vec(-10.0f64..10.0, d),
                "[a-z]{0,8}",
                0.0f64..1.0,
                selection_mode(),
                0usize..1000,
            )
        })
        .prop_map(|(d, dims, values, name, tau, mode, n_sel)| {
            let values = values[..dims.len()].to_vec();
            let mut a = SfidArtifact::new(&name, d, dims, values, tau).unwrap();
            a.selection_mode = mode;
            a.n_selected = n_sel;
            a
        })
}

fn artifact() -> impl Strategy<Value = DebiasArtifact> {
    prop_oneof![
        spd_artifact().prop_map(DebiasArtifact::Spd),
        sfid_artifact().prop_map(DebiasArtifact::Sfid),
    ]
}

/// A valid encoding of some file, for mutation.
fn valid_bytes() -> impl Strategy<Value = Vec<u8>> {
    prop_oneof![
        embeddings().prop_map(|e| encode_embeddings(&e).unwrap()),
        artifact().prop_map(|a| encode_artifact(&a).unwrap()),
    ]
}

fn decode_any(bytes: &[u8]) {
    // either outcome is fine; reaching the end without a panic is the property
    let _ = decode_embeddings(bytes);
    let _ = decode_artifact(bytes);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn embeddings_round_trip_byte_exact(file in embeddings()) {
        let bytes = encode_embeddings(&file).unwrap();
        let back = decode_embeddings(&bytes).unwrap();
        prop_assert_eq!(&back, &file);
        prop_assert_eq!(encode_embeddings(&back).unwrap(), bytes);
    }

    #[test]
    fn artifacts_round_trip_byte_exact(a in artifact()) {
        let bytes = encode_artifact(&a).unwrap();
        let back = decode_artifact(&bytes).unwrap();
        prop_assert_eq!(&back, &a);
        prop_assert_eq!(encode_artifact(&back).unwrap(), bytes);
    }

    #[test]
    fn every_truncation_is_rejected(bytes in valid_bytes()) {
        for len in 0..bytes.len() {
            prop_assert!(decode_embeddings(&bytes[..len]).is_err());
            prop_assert!(decode_artifact(&bytes[..len]).is_err());
        }
    }

    #[test]
    fn trailing_bytes_are_rejected(bytes in valid_bytes(), extra in prop::collection::vec(any::<u8>(), 1..8)) {
        let mut long = bytes;
        long.extend(extra);
        prop_assert!(decode_embeddings(&long).is_err());
        prop_assert!(decode_artifact(&long).is_err());
    }

    #[test]
    fn mutated_files_never_panic(
        bytes in valid_bytes(),
        edits in prop::collection::vec((any::<prop::sample::Index>(), any::<u8>()), 1..6),
    ) {
        let mut bytes = bytes;
        for (at, v) in edits {
            let i = at.index(bytes.len());
            bytes[i] = v;
        }
        decode_any(&bytes);
    }

    #[test]
    fn arbitrary_bytes_after_a_magic_never_panic(
        magic in prop::sample::select(vec![*b"EMB1", *b"SPD1", *b"SFD1"]),
        tail in prop::collection::vec(any::<u8>(), 0..200),
    ) {
        let mut bytes = magic.to_vec();
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend(tail);
        decode_any(&bytes);
    }

    #[test]
    fn labels_round_trip(cols in prop::collection::vec((2usize..5, "[a-z]{1,6}"), 1..4), n in 5usize..40) {
        let mut labels: Vec<(String, LabelVector)> = Vec::new();
        for (k, (c, name)) in cols.into_iter().enumerate() {
            let name = format!("{name}{k}");
            let y = LabelVector::new((0..n).map(|i| (i * (k + 1)) % c).collect(), c).unwrap();
            labels.push((name, y));
        }
        prop_assume!(labels.iter().all(|(_, y)| y.counts().iter().all(|&v| v > 0)));
        let text = format_labels(&labels).unwrap();
        prop_assert_eq!(parse_labels(&text).unwrap(), labels);
    }

    #[test]
    fn arbitrary_label_text_never_panics(text in "(sample_index)?[a-z0-9,\n ]{0,120}") {
        let _ = parse_labels(&text);
    }
}

#[test]
fn huge_declared_sizes_fail_before_allocating() {
    let mut bytes = b"EMB1".to_vec();
    bytes.extend_from_slice(&1u32.to_le_bytes());
    bytes.extend_from_slice(&u32::MAX.to_le_bytes());
    bytes.extend_from_slice(&u32::MAX.to_le_bytes());
    bytes.push(1);
    assert!(decode_embeddings(&bytes).is_err());
}

#[test]
fn non_orthonormal_stored_basis_is_rejected() {
    let d = 3;
    let art = SpdArtifact::new(
        BiasSubspaceArtifact {
            basis: random_basis(d, 1, 4, None).unwrap(),
            attribute_name: "a".into(),
            per_iteration_accuracy: vec![0.9, 0.5],
            directions_per_iteration: vec![1],
            class_count: 2,
            stop_reason: StopReason::ChanceReached,
        },
        NeutralMean {
            vector: vec![0.0; d],
            selection_mode: SelectionMode::Threshold,
            tau: 0.7,
            n_selected: 3,
            attribute_name: "a".into(),
        },
        true,
    )
    .unwrap();
    let mut bytes = encode_artifact(&DebiasArtifact::Spd(art)).unwrap();
    // first basis value sits after magic, version, name, class count, D and d_b
    let at = 4 + 4 + (4 + 1) + 4 + 4 + 4;
    bytes[at..at + 8].copy_from_slice(&2.0f64.to_le_bytes());
    let err = decode_artifact(&bytes).unwrap_err();
    assert_eq!(err.code(), "Format");
}
