use hvsjnd::codec::*;
use hvsjnd::pipeline::synthetic::scenes;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let steps: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(20);
    let lr: f32 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(1e-4);
    let lrf: f32 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(lr);
    let batch: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(1);
    let imgs = scenes(7, 8, 176, 176);
    let s: f32 = std::env::var("S").map(|v| v.parse().unwrap()).unwrap_or(16.0);
    let cfg = CodecTrainConfig { steps, batch, crop: 176, lr, lr_final: lrf, ..Default::default() };
    let t = Instant::now();
    let tr = train_codec(&imgs, &cfg, CodecArch { latent_scale: s, ..Default::default() }, |_, r| {
        if r.step % 50 == 0 || r.step <= 3 {
            eprintln!("{} bpp={:.3} psnr={:.2} loss={:.2} t={:.1}s", r.step, r.rate_bpp, r.psnr, r.loss, t.elapsed().as_secs_f64());
        }
        Ok(())
    })
    .unwrap();
    eprintln!("eval psnr {:?} total {:.1}s", tr.model.state.fidelity_psnr, t.elapsed().as_secs_f64());
}
