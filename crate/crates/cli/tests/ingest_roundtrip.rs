use gplinear::Dataset;
use gplinear_cli::ingest::{default_columns, read_dataset, write_dataset};
use nalgebra::DMatrix;
use proptest::prelude::*;

proptest! {
    #[test]
    fn emit_then_ingest_is_identity(
        rows in proptest::collection::vec(proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 4), 1..30)
    ) {
        let y: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let x: Vec<f64> = rows.iter().map(|r| r[1]).collect();
        let z = DMatrix::from_fn(rows.len(), 2, |i, j| rows[i][2 + j]);
        let d = Dataset::new(y, x, z).unwrap();
        let mut buf = Vec::new();
        write_dataset(&d, &mut buf).unwrap();
        let back = read_dataset(&buf[..], &default_columns(2)).unwrap();
        prop_assert_eq!(back, d);
    }
}
