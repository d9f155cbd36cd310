use hvsjnd::codec::*;
use hvsjnd::pipeline::{synthetic::scenes, Checkpoint};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let steps: usize = args[1].parse().unwrap();
    let imgs = scenes(7, 8, 176, 176);
    let cfg = CodecTrainConfig { steps, ..Default::default() };
    let mut tr = train_codec(&imgs, &cfg, CodecArch::default(), |_, _| Ok(())).unwrap();
    tr.finish(&imgs).unwrap();
    eprintln!("psnr {:?}", tr.model.state.fidelity_psnr);
    Checkpoint::from_codec(&tr.model, &tr.config, &tr.trace, None).unwrap().save(args[2].as_ref()).unwrap();
}
