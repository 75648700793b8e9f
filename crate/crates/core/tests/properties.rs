use geoqc_core::algebra::{coeffs_of, embed_local, proj_horizontal, HorizontalBasis};
use geoqc_core::circuit::{circuit_unitary, emit_circuit_text, parse_circuit_text, synthesize_coefficients};
use geoqc_core::dataset::{decode_matrix_rows, encode_matrix_rows};
use proptest::prelude::*;

fn coeffs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-0.3f64..0.3, 36)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn row_encoding_round_trips(c in coeffs()) {
        let basis = HorizontalBasis::new(3).unwrap();
        let u = embed_local(&c, &basis).unwrap();
        let seq = encode_matrix_rows(&u);
        prop_assert_eq!(seq.timesteps.len(), 8);
        prop_assert!(seq.timesteps.iter().all(|t| t.len() == 16));
        prop_assert_eq!(decode_matrix_rows(&seq).unwrap(), u);
    }

    #[test]
    fn coefficients_survive_combine_and_projection(c in coeffs()) {
        let basis = HorizontalBasis::new(3).unwrap();
        let lam = basis.combine(&c).unwrap();
        let back = coeffs_of(&lam, &basis).unwrap();
        prop_assert!(back.iter().zip(&c).all(|(a, b)| (a - b).abs() <= 1e-12));
        let p = proj_horizontal(&lam, &basis).unwrap();
        prop_assert!(p.matrix().distance(lam.matrix()) <= 1e-12);
    }

    #[test]
    fn circuit_text_round_trips_and_matches_embedding(c in coeffs()) {
        let basis = HorizontalBasis::new(3).unwrap();
        let circuit = synthesize_coefficients(&c, &basis).unwrap();
        let parsed = parse_circuit_text(&emit_circuit_text(&circuit)).unwrap();
        prop_assert_eq!(&parsed, &circuit);
        let u = embed_local(&c, &basis).unwrap();
        prop_assert!(circuit_unitary(&parsed).unwrap().distance(&u) <= 1e-10);
    }
}
