mod common;

use common::*;

#[test]
fn closed_form_gain_matches_the_poisson_sum() {
    let (worst, points) = gain_qber_grid_max_error();
    assert_eq!(points, 500);
    assert!(worst <= 1e-10, "max |error| = {worst:e}");
}

#[test]
fn poisson_sum_reference_point() {
    let (q, e) = poisson_sum_gain_qber(0.1, 0.5, 1e-5, 0.015);
    let ch = ponqkd::qkd::ChannelParams {
        eta: 0.1,
        y0: 1e-5,
        e_det: 0.015,
    };
    let (qc, ec) = ponqkd::qkd::gain_and_qber(0.5, &ch);
    assert!((q - qc).abs() <= 1e-10 && (e - ec).abs() <= 1e-10);
}

#[test]
fn raman_closed_forms_match_slice_integration() {
    let worst = raman_max_error_db(0x5a11ce, 100);
    assert!(worst <= 0.01, "max |error| = {worst} dB");
}

#[test]
fn raman_reference_span() {
    // +3 dBm pump over 3 km at 0.35 dB/km, rho = 2e-9 /(km nm), 1 nm.
    let oracle = raman_slices_dbm(3.0, 3.0, 0.35, 2e-9, 1.0, false, 10_000);
    let closed = ponqkd::noise::raman_noise_power_dbm(
        3.0,
        3.0,
        ponqkd::topology::FiberType::G652D,
        1490.0,
        1310.0,
        1.0,
        ponqkd::noise::RamanDirection::Forward,
        &ponqkd::noise::RamanModel::Flat(2e-9),
        &ponqkd::optics::AttenuationModel::default(),
    );
    assert!((closed - oracle).abs() <= 0.01, "{closed} vs {oracle}");
}

#[test]
fn decoy_bounds_are_safe_on_random_channels() {
    assert_eq!(decoy_bound_violations(0xdec0, 1000), 0);
}
