use cantor_density::{
    build_histogram, BigRational, CylinderMeasure, DensityOracle, ExactMeasure, ParamSequence, Sample, SequencePrefix,
};
use num_traits::One;

fn fixture() -> Sample {
    Sample::parse("00\n01\n01\n11\n").unwrap()
}

#[test]
fn histogram_in_single_precision() {
    let lambda: CylinderMeasure<f32> = "bernoulli:tail=0.5,head=0.25".parse().unwrap();
    let h = build_histogram(&fixture(), &lambda, 2).unwrap();
    assert!((h.integral_check() - 1.0).abs() <= 1e-6);
    // cell 01 has mass 3/4 * 1/2
    assert!((h.value_in_cell(1) - 4.0 / 3.0).abs() <= 1e-6);
}

#[test]
fn histogram_in_exact_rationals() {
    let lambda: ExactMeasure = "bernoulli:tail=0.75,head=0.5".parse().unwrap();
    let h = build_histogram(&fixture(), &lambda, 2).unwrap();
    assert!(h.integral_check().is_one());
    // count 2 of 4 in cell 01 with mass 1/2 * 3/4
    assert_eq!(h.value_in_cell(1), BigRational::new(4.into(), 3.into()));
}

#[test]
fn oracle_agrees_across_scalars() {
    let x = SequencePrefix::new(vec![true, false, true, true]).unwrap();
    let f64_oracle =
        DensityOracle::new(ParamSequence::new(vec![0.25], 0.5).unwrap(), ParamSequence::constant(0.5).unwrap())
            .unwrap();
    let exact = DensityOracle::<BigRational>::new(
        ParamSequence::new(vec![BigRational::new(1.into(), 4.into())], BigRational::new(1.into(), 2.into())).unwrap(),
        ParamSequence::fair(),
    )
    .unwrap();
    assert_eq!(f64_oracle.exact_density(&x).unwrap(), 0.5);
    assert_eq!(exact.exact_density(&x).unwrap(), BigRational::new(1.into(), 2.into()));
}
