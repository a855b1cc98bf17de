mod common;

use common::*;

#[test]
fn encoder_discriminator_and_instance_norm_respect_permutations() {
    let (encoder, discriminator, norm) = permutation_errors(31, 20);
    assert!(encoder < 1e-6, "encoder {encoder}");
    assert!(discriminator < 1e-6, "discriminator {discriminator}");
    assert!(norm < 1e-6, "instance norm {norm}");
}

#[test]
fn generator_is_permutation_equivariant() {
    let mut r = rng(32);
    let mesh = icosahedron();
    let model = toy_model(mesh.template(), 1);
    let posed = random_coords(&mut r, 12, 1.0);
    let identity = random_coords(&mut r, 12, 1.0);
    let out = model.generate(&posed, &identity).unwrap();
    for _ in 0..5 {
        let perm = permutation(&mut r, 12);
        let permuted = model
            .generate(&permute_columns(&posed, &perm), &identity)
            .unwrap();
        assert!(max_abs_diff(&permuted, &permute_columns(&out, &perm)) < 1e-9);
        // the style path pools over vertices, so permuting the identity changes nothing
        let restyled = model
            .generate(&posed, &permute_columns(&identity, &perm))
            .unwrap();
        assert!(max_abs_diff(&restyled, &out) < 1e-9);
    }
}
