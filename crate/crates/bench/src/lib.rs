//! Fixtures shared by the benchmarks.

use spikelab::initializers::uniform_sphere;
use spikelab::{Beta, Disorder, MixtureSpec, SphereState};

/// A mixed 2+3-spin landscape at size `n` with a point on the sphere.
pub fn fixture(n: usize, beta: Beta) -> (MixtureSpec, Disorder, SphereState) {
    let spec = MixtureSpec::new(n, [(2, 1.0), (3, 1.0)], 3.0, (n as f64).sqrt(), beta).expect("spec");
    let disorder = Disorder::sample(&spec, 1).expect("disorder");
    let x = uniform_sphere(n, &mut spikelab::rng::stream(2, &[])).expect("state");
    (spec, disorder, x)
}
