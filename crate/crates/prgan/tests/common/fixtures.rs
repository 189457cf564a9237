//! Hand-built networks whose discriminator accuracy is known in advance.

use prgan::networks::{
    Discriminator, DiscriminatorConfig, Generator, GeneratorConfig, LatentCode, ParamSet,
};
use prgan::training::{TrainConfig, Trainer};
use prgan::NdValue;

pub fn set_param(params: &mut ParamSet, name: &str, value: NdValue) {
    let i = params.names().iter().position(|n| n == name).unwrap_or_else(|| panic!("no parameter {name}"));
    assert_eq!(params.values()[i].shape(), value.shape(), "{name}");
    params.values_mut()[i] = value;
}

/// Generator whose every voxel is sigmoid(-20): its projections are black.
pub fn blank_generator() -> Generator {
    let cfg = GeneratorConfig {
        channels: [4, 4, 2],
        ..GeneratorConfig::voxel()
    };
    let mut g = Generator::new(cfg, "gen", &mut prgan::seeded_rng(1)).unwrap();
    for v in g.params.values_mut() {
        v.fill(0.0);
    }
    set_param(&mut g.params, "gen/up2/b", NdValue::full(&[1], -20.0));
    g
}

/// Discriminator without batch norm that reads only pixel (0, 0):
/// p = sigmoid(10 x[0, 0] - 5).
pub fn corner_discriminator() -> Discriminator {
    let cfg = DiscriminatorConfig {
        channels: [2, 2, 2],
        batch_norm: false,
        ..DiscriminatorConfig::image()
    };
    let mut d = Discriminator::new(cfg, "disc", &mut prgan::seeded_rng(2)).unwrap();
    for v in d.params.values_mut() {
        v.fill(0.0);
    }
    // A centered tap on channel 0 of each stride-2 stage passes x[0, 0]
    // through to output position (0, 0).
    for (i, cin) in [(0, 1), (1, 2), (2, 2)] {
        let mut w = NdValue::zeros(&[2, cin, 5, 5]);
        w.data_mut()[2 * 5 + 2] = 1.0;
        set_param(&mut d.params, &format!("disc/conv{i}/w"), w);
    }
    let mut fc = NdValue::zeros(&[1, 2 * 4 * 4]);
    fc.data_mut()[0] = 10.0;
    set_param(&mut d.params, "disc/fc/w", fc);
    set_param(&mut d.params, "disc/fc/b", NdValue::full(&[1], -5.0));
    d
}

/// Batch of `n` real images of which the first `lit` have pixel (0, 0) set,
/// so the corner discriminator calls exactly `lit` of them real.
pub fn corner_batch(n: usize, lit: usize) -> NdValue {
    let mut x = NdValue::zeros(&[n, 32, 32]);
    for s in 0..lit {
        x.data_mut()[s * 1024] = 1.0;
    }
    x
}

/// Trainer with the blank generator and corner discriminator; with `n` real
/// samples and `lit` of them lit, D accuracy is `(lit + n) / 2n`.
pub fn skip_rule_trainer() -> Trainer {
    let cfg = TrainConfig {
        lr_discriminator: 1e-3,
        gen_channels: [4, 4, 2],
        disc_channels: [2, 2, 2],
        ..TrainConfig::default()
    };
    Trainer::from_parts(cfg, blank_generator(), corner_discriminator()).unwrap()
}

pub fn codes(n: usize, seed: u64) -> Vec<LatentCode> {
    let mut rng = prgan::seeded_rng(seed);
    (0..n).map(|_| LatentCode::sample(&mut rng)).collect()
}
