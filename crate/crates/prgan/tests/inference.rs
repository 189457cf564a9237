use prgan::inference::{
    evaluate_encoder, generator_forward, interpolate, synthesize_pairs, train_encoder, EncoderParams,
    EncoderTraining, EncodingPair,
};
use prgan::networks::{viewpoint_select, Generator, GeneratorConfig, LatentCode};
use prgan::projection::{project_view, Silhouette};
use rand::Rng;

fn small_generator(seed: u64) -> Generator {
    Generator::new(GeneratorConfig::voxel().narrowed(32), "gen", &mut prgan::seeded_rng(seed)).unwrap()
}

fn grid_bits(g: &prgan::projection::VoxelGrid) -> Vec<u32> {
    g.data().iter().map(|v| v.to_bits()).collect()
}

#[test]
fn synthesized_pairs_recompute_bitwise() {
    let gen = small_generator(1);
    assert!(synthesize_pairs(&gen, 0, 1).unwrap().is_empty());
    let pairs = synthesize_pairs(&gen, 40, 2).unwrap();
    assert_eq!(pairs.len(), 40);
    let again = synthesize_pairs(&gen, 40, 2).unwrap();
    let mut g = gen.clone();
    for (p, q) in pairs.iter().zip(&again) {
        assert_eq!(p.code, q.code);
        assert_eq!(p.image, q.image);
        let grid = generator_forward(&mut g, std::slice::from_ref(&p.code)).unwrap().remove(0);
        assert_eq!(p.image, project_view(&grid, viewpoint_select(&p.code)));
    }
}

#[test]
fn encoder_memorizes_a_few_pairs() {
    // Distinct random images: an untrained generator's projections are all alike.
    let mut rng = prgan::seeded_rng(4);
    let pairs: Vec<EncodingPair> = (0..16)
        .map(|_| EncodingPair {
            image: Silhouette::new(32, (0..1024).map(|_| rng.random::<f32>()).collect()).unwrap(),
            code: LatentCode::sample(&mut rng),
        })
        .collect();
    let opts = EncoderTraining {
        epochs: 300,
        batch_size: 16,
        seed: 5,
        ..EncoderTraining::default()
    };
    let (enc, losses) = train_encoder(&pairs, &opts).unwrap();
    assert!(losses.last().unwrap() < &losses[0]);
    let (_, mse) = evaluate_encoder(&enc, &pairs).unwrap();
    assert!(mse < 0.01, "mse {mse}");
    assert!(train_encoder(&[], &opts).is_err());
}

#[test]
fn encode_output_range_and_view_coordinate() {
    let enc = EncoderParams::new(&mut prgan::seeded_rng(6));
    let img = Silhouette::new(32, (0..1024).map(|i| (i % 7) as f32 / 7.0).collect()).unwrap();
    let z = enc.encode(&img).unwrap();
    assert_eq!(z.values().len(), 201);
    assert!(z.values().iter().all(|v| (-1.0..=1.0).contains(v)));
    assert!(enc.encode(&Silhouette::zeros(16)).is_err());

    let mut shape_changed = z.values().to_vec();
    shape_changed[..200].iter_mut().for_each(|v| *v = -*v);
    assert_eq!(viewpoint_select(&LatentCode::new(shape_changed).unwrap()), viewpoint_select(&z));
}

#[test]
fn interpolation_endpoints_and_range() {
    let mut gen = small_generator(7);
    let mut rng = prgan::seeded_rng(8);
    let (za, zb) = (LatentCode::sample(&mut rng), LatentCode::sample(&mut rng));
    let frames = interpolate(&mut gen, &za, &zb, 5).unwrap();
    assert_eq!(frames.len(), 5);
    let ends = generator_forward(&mut gen, &[za.clone(), zb.clone()]).unwrap();
    assert_eq!(grid_bits(&frames[0]), grid_bits(&ends[0]));
    assert_eq!(grid_bits(&frames[4]), grid_bits(&ends[1]));
    assert!(frames.iter().all(|f| f.data().iter().all(|v| (0.0..=1.0).contains(v))));

    let same = interpolate(&mut gen, &za, &za, 3).unwrap();
    assert!(same.iter().all(|f| f == &same[0]));
    assert!(interpolate(&mut gen, &za, &zb, 1).is_err());
}
