use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use hvsjnd::codec::CodecModel;
use hvsjnd::generator::{generate, Ablation, GeneratorModel, JndMap};
use hvsjnd::gradcam::prior_maps;
use hvsjnd::imaging::{load_image_as_rgb, minmax_visualization, save_image, ImageTensor};
use hvsjnd::inject::{calibrate_epsilon, evaluate_pair, write_report, RademacherField, MATCHED_PSNR_DB};
use hvsjnd::pipeline::experiment::{CODEC_CHECKPOINT, GENERATOR_CHECKPOINT};
use hvsjnd::pipeline::{
    atomic_write, ingest, load_external_priors, run_codec_stage, run_experiment, run_jnd_stage, Checkpoint,
    ExperimentConfig, StageOutput,
};
use hvsjnd::subjective::{ImageStore, Plan, ScoreStore, SubjectiveService};
use hvsjnd::Execution;

const CHECKPOINT_DIR_ENV: &str = "HVSJND_CHECKPOINT_DIR";

#[derive(Parser)]
#[command(name = "hvsjnd", version, about = "Codec-guided JND generation and matched-PSNR noise injection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML file with experiment settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Default location of codec.ckpt and generator.ckpt.
    #[arg(long, env = CHECKPOINT_DIR_ENV)]
    checkpoint_dir: Option<PathBuf>,
    /// Run batches on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train the degradation codec (stage 1).
    TrainCodec {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Output checkpoint; default `<checkpoint-dir>/codec.ckpt`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        crop: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        lr: Option<f32>,
        #[arg(long)]
        resume: bool,
    },
    /// Train the JND generator against a frozen codec (stage 2).
    TrainJnd {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        codec: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Output checkpoint; default `<checkpoint-dir>/generator.ckpt`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        crop: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        lr: Option<f32>,
        /// Ablation: bl-p, bl-cam or bl-l3.
        #[arg(long)]
        ablate: Option<Ablation>,
        /// Directory of `<stem>.attention.png` / `<stem>.contrast.png` maps.
        #[arg(long)]
        external_priors: Option<PathBuf>,
        #[arg(long)]
        resume: bool,
    },
    /// Run both stages as described by `--config`.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Predict the JND map of one image.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        codec: Option<PathBuf>,
        #[arg(long)]
        r#gen: Option<PathBuf>,
        #[arg(long)]
        image: PathBuf,
        /// Real-valued map (JSON); an 8-bit preview goes next to it as `.png`.
        #[arg(long)]
        out_jnd: PathBuf,
    },
    /// Write the codec CAM and guided backprop maps of one image.
    ExtractPriors {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        codec: Option<PathBuf>,
        #[arg(long)]
        image: PathBuf,
        /// Output directory for `cam.png`, `guided.png` and `priors.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Inject JND-shaped noise at a target PSNR.
    Inject {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        image: PathBuf,
        /// JND map written by `generate`.
        #[arg(long)]
        jnd: PathBuf,
        #[arg(long, default_value_t = MATCHED_PSNR_DB)]
        psnr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare two generators at matched PSNR over a directory of images.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        codec: Option<PathBuf>,
        #[arg(long)]
        images: PathBuf,
        /// Two generator checkpoints; the file stem names each model.
        #[arg(long, num_args = 2)]
        models: Vec<PathBuf>,
        #[arg(long, default_value_t = MATCHED_PSNR_DB)]
        psnr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        report: PathBuf,
        /// Also save each distorted image here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Serve the blinded viewing test over HTTP.
    Serve {
        #[command(flatten)]
        common: Common,
        /// JSON array of trial entries.
        #[arg(long)]
        plan: PathBuf,
        /// Append-only score log (JSON lines).
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Export current scores as CSV and exit.
        #[arg(long)]
        export_csv: Option<PathBuf>,
    },
}

impl Common {
    fn experiment(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if self.sequential {
            cfg.execution = Execution::Sequential;
        }
        cfg.codec.execution = cfg.execution;
        cfg.jnd.execution = cfg.execution;
        Ok(cfg)
    }

    fn default_path(&self, explicit: &Option<PathBuf>, file: &str) -> Result<PathBuf> {
        if let Some(p) = explicit {
            return Ok(p.clone());
        }
        match &self.checkpoint_dir {
            Some(d) => Ok(d.join(file)),
            None => bail!("no {file} given; pass it explicitly or set {CHECKPOINT_DIR_ENV}"),
        }
    }
}

fn trace_path(ckpt: &Path) -> PathBuf {
    ckpt.with_extension("trace.csv")
}

fn load_codec(path: &Path) -> Result<CodecModel> {
    let codec = Checkpoint::load(path)?.codec()?;
    codec.ensure_trained()?;
    Ok(codec)
}

fn load_generator(path: &Path) -> Result<GeneratorModel> {
    Ok(Checkpoint::load(path)?.generator()?)
}

fn predict(codec: &CodecModel, generator: &GeneratorModel, x: &ImageTensor) -> Result<JndMap> {
    Ok(generate(generator, x, &prior_maps(codec, x)?)?)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    Ok(atomic_write(path, &serde_json::to_vec(value)?)?)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::TrainCodec {
            common,
            data,
            out,
            steps,
            lambda,
            seed,
            crop,
            batch,
            lr,
            resume,
        } => {
            let mut cfg = common.experiment()?;
            let c = &mut cfg.codec;
            c.steps = steps.unwrap_or(c.steps);
            c.lambda = lambda.unwrap_or(c.lambda);
            c.seed = seed.unwrap_or(c.seed);
            c.crop = crop.unwrap_or(c.crop);
            c.batch = batch.unwrap_or(c.batch);
            if let Some(lr) = lr {
                c.lr = lr;
                c.lr_final = c.lr_final.min(lr);
            }
            cfg.validate()?;
            let data = data.unwrap_or(cfg.dataset.clone());
            let out = common.default_path(&out, CODEC_CHECKPOINT)?;
            let images = ingest(&data, cfg.codec.crop)?.tensors();
            let trace = trace_path(&out);
            let model = run_codec_stage(
                &cfg.codec,
                cfg.codec_arch,
                &images,
                StageOutput {
                    checkpoint_every: cfg.checkpoint_every,
                    resume: resume || cfg.resume,
                    ..StageOutput::new(&out, &trace)
                },
            )?;
            println!(
                "codec saved to {} ({} steps, fidelity {:.2} dB)",
                out.display(),
                model.state.steps,
                model.state.fidelity_psnr.unwrap_or(f64::NAN)
            );
        }
        Command::TrainJnd {
            common,
            codec,
            data,
            out,
            alpha,
            beta,
            gamma,
            steps,
            seed,
            crop,
            batch,
            lr,
            ablate,
            external_priors,
            resume,
        } => {
            let mut cfg = common.experiment()?;
            let j = &mut cfg.jnd;
            j.weights.alpha = alpha.unwrap_or(j.weights.alpha);
            j.weights.beta = beta.unwrap_or(j.weights.beta);
            j.weights.gamma = gamma.unwrap_or(j.weights.gamma);
            j.steps = steps.unwrap_or(j.steps);
            j.seed = seed.unwrap_or(j.seed);
            j.crop = crop.unwrap_or(j.crop);
            j.batch = batch.unwrap_or(j.batch);
            j.lr = lr.unwrap_or(j.lr);
            j.ablation = ablate.unwrap_or(j.ablation);
            if external_priors.is_some() {
                cfg.external_priors = external_priors;
            }
            cfg.validate()?;
            let codec_path = common.default_path(&codec.or(cfg.codec_checkpoint.clone()), CODEC_CHECKPOINT)?;
            let out = common.default_path(&out, GENERATOR_CHECKPOINT)?;
            let codec = load_codec(&codec_path)?;
            let collection = ingest(data.as_ref().unwrap_or(&cfg.dataset), cfg.jnd.crop)?;
            let external = match &cfg.external_priors {
                Some(dir) => Some(load_external_priors(dir, &collection)?),
                None => None,
            };
            let trace = trace_path(&out);
            let trainer = run_jnd_stage(
                &cfg.jnd,
                cfg.generator_arch.clone(),
                &codec,
                &codec_path,
                &collection.tensors(),
                external.as_deref(),
                StageOutput {
                    checkpoint_every: cfg.checkpoint_every,
                    resume: resume || cfg.resume,
                    ..StageOutput::new(&out, &trace)
                },
            )?;
            println!(
                "generator saved to {} ({} steps, gradient coverage {:.3})",
                out.display(),
                trainer.next_step(),
                trainer.gradient_coverage()
            );
        }
        Command::Run { common } => {
            ensure!(common.config.is_some(), "run needs --config");
            let summary = run_experiment(&common.experiment()?)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Generate {
            common,
            codec,
            r#gen,
            image,
            out_jnd,
        } => {
            ensure!(
                out_jnd.extension().is_none_or(|e| e != "png"),
                "--out-jnd names the real-valued map; the .png preview is written next to it"
            );
            let codec = load_codec(&common.default_path(&codec, CODEC_CHECKPOINT)?)?;
            let generator = load_generator(&common.default_path(&r#gen, GENERATOR_CHECKPOINT)?)?;
            let x = load_image_as_rgb(&image)?;
            let xj = predict(&codec, &generator, &x)?;
            write_json(&out_jnd, &serde_json::to_value(&xj)?)?;
            let preview = out_jnd.with_extension("png");
            save_image(&minmax_visualization(xj.values()), &preview)?;
            println!("jnd map written to {} (preview {})", out_jnd.display(), preview.display());
        }
        Command::ExtractPriors {
            common,
            codec,
            image,
            out,
        } => {
            let codec = load_codec(&common.default_path(&codec, CODEC_CHECKPOINT)?)?;
            let x = load_image_as_rgb(&image)?;
            let priors = prior_maps(&codec, &x)?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            save_image(&ImageTensor::clipped(priors.cam.clone()), out.join("cam.png"))?;
            save_image(&minmax_visualization(&priors.guided), out.join("guided.png"))?;
            write_json(
                &out.join("priors.json"),
                &serde_json::json!({
                    "cam": priors.cam,
                    "guided": priors.guided,
                    "target_scalar": priors.target_scalar,
                }),
            )?;
            println!("priors written to {}", out.display());
        }
        Command::Inject {
            common: _,
            image,
            jnd,
            psnr,
            seed,
            out,
        } => {
            let x = load_image_as_rgb(&image)?;
            let text = std::fs::read_to_string(&jnd).with_context(|| format!("reading {}", jnd.display()))?;
            let xj: JndMap = serde_json::from_str(&text).with_context(|| format!("parsing {}", jnd.display()))?;
            let r = RademacherField::for_image(seed, &x);
            let res = calibrate_epsilon(&x, &xj, &r, psnr)?;
            save_image(&res.y0, &out)?;
            println!(
                "epsilon {:.6} achieved {:.4} dB clipped {:.4} seed {}",
                res.epsilon, res.achieved_psnr, res.clipped_fraction, res.seed
            );
        }
        Command::Evaluate {
            common,
            codec,
            images,
            models,
            psnr,
            seed,
            report,
            out_dir,
        } => {
            let codec = load_codec(&common.default_path(&codec, CODEC_CHECKPOINT)?)?;
            let names: Vec<String> = models
                .iter()
                .map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
                .collect();
            ensure!(names[0] != names[1], "the two models need distinct file names");
            let gens = models.iter().map(|p| load_generator(p)).collect::<Result<Vec<_>>>()?;
            let collection = ingest(&images, hvsjnd::imaging::MIN_SIDE)?;
            if let Some(d) = &out_dir {
                std::fs::create_dir_all(d)?;
            }
            let mut rows = Vec::new();
            for n in &collection.images {
                let maps = gens.iter().map(|g| predict(&codec, g, &n.image)).collect::<Result<Vec<_>>>()?;
                let r = RademacherField::for_image(seed, &n.image);
                let ev = evaluate_pair(&n.name, &n.image, (&names[0], &maps[0]), (&names[1], &maps[1]), psnr, &r)
                    .with_context(|| format!("image {}", n.name))?;
                if let Some(d) = &out_dir {
                    let stem = Path::new(&n.name).file_stem().unwrap_or_default().to_string_lossy().into_owned();
                    save_image(&ev.a.y0, d.join(format!("{stem}.{}.png", names[0])))?;
                    save_image(&ev.b.y0, d.join(format!("{stem}.{}.png", names[1])))?;
                }
                rows.extend(ev.rows);
            }
            let mut buf = Vec::new();
            write_report(&rows, &mut buf)?;
            atomic_write(&report, &buf)?;
            println!("{} rows written to {}", rows.len(), report.display());
        }
        Command::Serve {
            common: _,
            plan,
            scores,
            addr,
            seed,
            export_csv,
        } => {
            let mut images = ImageStore::default();
            let plan = Plan::load(&plan, seed, &mut images)?;
            let store = ScoreStore::open(&scores)?;
            if let Some(csv_path) = export_csv {
                let mut buf = Vec::new();
                store.export_csv(&mut buf)?;
                atomic_write(&csv_path, &buf)?;
                println!("exported {} scores to {}", store.current().len(), csv_path.display());
                return Ok(());
            }
            let service = SubjectiveService::new(plan, images, store, seed);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(&addr).await.with_context(|| format!("binding {addr}"))?;
                log::info!("serving on http://{}", listener.local_addr()?);
                hvsjnd_service::serve(listener, service).await?;
                anyhow::Ok(())
            })?;
        }
    }
    Ok(())
}
