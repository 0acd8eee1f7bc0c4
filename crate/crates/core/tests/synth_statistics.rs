use lipforensics::synth::{gen_forgery, gen_lipreading, ArtefactFamily, SynthConfig};
use lipforensics::train::ForgerySample;

fn histogram(samples: &[&ForgerySample]) -> Vec<f64> {
    let mut h = vec![0.0f64; 256];
    let mut n = 0.0;
    for s in samples {
        for &v in s.frames.data() {
            h[v.round().clamp(0.0, 255.0) as usize] += 1.0;
            n += 1.0;
        }
    }
    h.iter().map(|c| c / n).collect()
}

fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[test]
fn real_and_fake_intensity_histograms_match() {
    for family in ArtefactFamily::ALL {
        let cfg = SynthConfig { num_videos: 40, frames_per_video: 40, artefact_family: family, seed: 21, ..Default::default() };
        let videos = gen_forgery(&cfg).unwrap();
        let real: Vec<_> = videos.iter().filter(|v| v.label == 0).collect();
        let fake: Vec<_> = videos.iter().filter(|v| v.label == 1).collect();
        let tv = total_variation(&histogram(&real), &histogram(&fake));
        assert!(tv <= 0.01, "{family}: total variation {tv}");
    }
}

#[test]
fn generators_are_pure_functions_of_config() {
    let cfg = SynthConfig { num_videos: 6, frames_per_video: 12, seed: 22, ..Default::default() };
    let a = gen_forgery(&cfg).unwrap();
    let b = gen_forgery(&cfg).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.video_id, y.video_id);
        assert!(x.frames.bitwise_eq(&y.frames));
    }
    let a = gen_lipreading(&cfg).unwrap();
    let b = gen_lipreading(&cfg).unwrap();
    assert!(a.iter().zip(&b).all(|(x, y)| x.label == y.label && x.frames.bitwise_eq(&y.frames)));
}

#[test]
fn zero_strength_fakes_equal_their_sources() {
    let cfg = SynthConfig { num_videos: 10, frames_per_video: 12, artefact_strength: 0.0, seed: 24, ..Default::default() };
    let videos = gen_forgery(&cfg).unwrap();
    for fake in videos.iter().filter(|v| v.label == 1) {
        let real = videos.iter().find(|v| v.label == 0 && v.source == fake.source).unwrap();
        assert!(fake.frames.bitwise_eq(&real.frames));
    }
}
