use kifa::bell::bell;
use kifa_demo::{and_type_value, bell_fit, displacement_series};

#[test]
fn intense_samples_move_more() {
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    for action in 0..5 {
        let mild = mean(displacement_series(action, false, 3).unwrap());
        let intense = mean(displacement_series(action, true, 3).unwrap());
        assert!(intense > mild, "action {action}: {intense} vs {mild}");
    }
    assert!(displacement_series(5, false, 3).is_err());
}

#[test]
fn and_type_hits_both_norms() {
    assert_eq!(and_type_value(0.3, 0.8, 1.0, false).unwrap(), 0.3);
    assert_eq!(and_type_value(0.3, 0.8, 0.0, false).unwrap(), 0.8);
    let product = and_type_value(0.5, 0.5, 1.0, true).unwrap();
    assert!((product - 0.25).abs() <= 1e-15);
    assert!(and_type_value(1.5, 0.2, 0.5, false).is_err());
}

#[test]
fn bell_fit_recovers_known_curve() {
    let x: Vec<f64> = (0..41).map(|i| i as f64 / 40.0).collect();
    let y: Vec<f64> = x.iter().map(|&v| bell(v, 0.5, 0.2, 2.0)).collect();
    let fit = bell_fit(&x, &y).unwrap();
    assert!((fit[0] - 0.5).abs() <= 1e-3);
    assert!((fit[1] - 0.2).abs() <= 1e-3);
    assert!((fit[2] - 2.0).abs() <= 1e-3);
    assert!(bell_fit(&[1.0, 1.0, 1.0], &[0.0, 0.5, 1.0]).is_err());
}
