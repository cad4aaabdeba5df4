//! Kernel values frozen from a 40-digit brute-force image sum (121 images,
//! antiderivatives by adaptive quadrature).

use openkpz_core::kernels::{
    boundary_potential, d_p_neumann, p_dirichlet, p_neumann, periodic_antiderivative,
    renormalization, smoothed_altsign, smoothed_zigzag,
};
use openkpz_core::{BoundaryParams, KernelConfig};

fn close(got: f64, want: f64, tol: f64) {
    assert!((got - want).abs() <= tol * want.abs().max(1.0), "got {got}, want {want}");
}

#[test]
fn kernel_values_match_high_precision_oracle() {
    let c = KernelConfig::default();
    close(p_neumann(0.3, 0.2, 0.7, &c).unwrap(), 0.783_086_188_056_629_5, 1e-14);
    close(p_neumann(0.05, 3.4, -1.25, &c).unwrap(), 1.450_745_477_087_343_8, 1e-14);
    close(p_neumann(0.001, 0.0, 0.0, &c).unwrap(), 25.231_325_220_201_6, 1e-14);
    close(p_dirichlet(0.05, 0.3, 0.6, &c).unwrap(), 0.724_819_264_481_639_6, 1e-14);
    close(d_p_neumann(0.05, 0.2, 0.1, &c).unwrap(), -7.580_908_926_449_032, 1e-14);
    close(periodic_antiderivative(0.1, 0.4, &c).unwrap(), 0.197_048_604_653_648_6, 1e-14);
    close(periodic_antiderivative(0.02, -1.7, &c).unwrap(), 0.333_052_573_237_655_4, 1e-14);
    close(smoothed_zigzag(0.02, 0.3, &c).unwrap(), 0.366_105_889_573_683_1, 1e-14);
    close(smoothed_altsign(0.02, 0.3, &c).unwrap(), 0.966_104_403_376_938_4, 1e-14);
    close(renormalization(0.01, 0.1, &c).unwrap(), 3.858_716_661_290_268, 1e-14);
    let bp = BoundaryParams::stationary(0.3).unwrap();
    close(boundary_potential(0.01, 0.02, &bp, &c).unwrap(), 0.782_085_387_950_911_8, 1e-14);
}
