use diffreg::field::{FieldModel, RadianceConfig, RadianceFieldModel, SdfConfig, SdfFieldModel};
use diffreg::scene::AnalyticScene;
use diffreg::verify::{central_gradient, central_hessian, verify_model, verify_scene};

fn show(r: &diffreg::verify::VerifyReport) {
    for c in &r.checks {
        println!("{:<32} {} {:.3e} < {:.1e}", c.name, c.passed, c.measured, c.tolerance);
    }
}

#[test]
fn fd_helpers_on_a_quadratic() {
    let f = |x: &[f64]| x[0] * x[0] + 3.0 * x[0] * x[1] - x[1];
    let g = central_gradient(f, &[1.0, 2.0], 1e-4);
    assert!((g[0] - 8.0).abs() < 1e-8 && (g[1] - 2.0).abs() < 1e-8);
    let h = central_hessian(f, &[1.0, 2.0], 1e-3);
    assert!((h[0][0] - 2.0).abs() < 1e-5 && (h[0][1] - 3.0).abs() < 1e-5 && h[1][1].abs() < 1e-5);
}

#[test]
fn analytic_scenes_pass() {
    for scene in [AnalyticScene::sphere(0.8), AnalyticScene::two_primitives()] {
        let r = verify_scene(&scene, 3);
        show(&r);
        assert!(r.passed);
    }
}

#[test]
fn small_models_pass() {
    let rad = RadianceConfig { depth: 2, width: 16, skip_layer: None, color_width: 8, ..RadianceConfig::default() };
    let r = verify_model(&FieldModel::Radiance(RadianceFieldModel::new(rad, 1)), 5);
    show(&r);
    assert!(r.passed);
    let sdf = SdfConfig { depth: 3, width: 16, skip_layer: None, ..SdfConfig::default() };
    let r = verify_model(&FieldModel::Sdf(SdfFieldModel::new(sdf, 1)), 5);
    show(&r);
    assert!(r.passed);
    assert!(r.checks.iter().any(|c| c.name == "gaussian_curvature_vs_fd"));
}
