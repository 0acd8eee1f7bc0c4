use lipforensics::preprocess::{preprocess_video, PreprocessConfig, Similarity, CROP_SIZE};
use lipforensics::synth::{plan_forgery, random_pose, render_video, DiskOptions, SynthConfig};
use lipforensics::tensor::{Rng, Tensor};

fn clean_opts() -> DiskOptions {
    DiskOptions { pixel_noise: false, landmark_noise: 0.0, ..Default::default() }
}

fn crops(pose: &Similarity, seed: u64) -> Tensor {
    let cfg = SynthConfig { num_videos: 2, frames_per_video: 16, seed, ..Default::default() };
    let plan = &plan_forgery(&cfg, "").unwrap()[0];
    let video = render_video(plan, pose, &clean_opts()).unwrap();
    preprocess_video(&video.frames, &video.landmarks, &PreprocessConfig::default()).unwrap()
}

fn interior_mad(a: &Tensor, b: &Tensor, margin: usize) -> f64 {
    let n = CROP_SIZE;
    let (mut sum, mut count) = (0.0, 0usize);
    for (pa, pb) in a.data().chunks(n * n).zip(b.data().chunks(n * n)) {
        for y in margin..n - margin {
            for x in margin..n - margin {
                sum += (pa[y * n + x] - pb[y * n + x]).abs() as f64;
                count += 1;
            }
        }
    }
    sum / count as f64
}

#[test]
fn global_similarity_perturbation_barely_moves_mouth_crops() {
    let s = Similarity::from_parts(0.9, 0.0, 0.0, 0.0);
    let [cx, cy] = s.apply([128.0, 140.0]);
    let base = Similarity { tx: 128.0 - cx, ty: 128.0 - cy, ..s };
    let reference = crops(&base, 1);
    let mut rng = Rng::new(2);
    for _ in 0..4 {
        let pose = random_pose(&mut rng, 256);
        let moved = crops(&pose, 1);
        let mad = interior_mad(&reference, &moved, 4);
        assert!(mad <= 2.0, "mean abs diff {mad} exceeds 2/255 of full scale");
    }
}

#[test]
fn perturbed_crops_still_differ_between_videos() {
    let pose = random_pose(&mut Rng::new(3), 256);
    let a = crops(&pose, 1);
    let b = crops(&pose, 5);
    assert!(interior_mad(&a, &b, 4) > 2.0);
}
