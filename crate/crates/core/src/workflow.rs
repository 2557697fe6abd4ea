//! File-level stages over an output directory:
//!
//! ```text
//! data/{train,heldout,rl}.tsv, data/manifest.txt
//! ckpt/<role>-<stage>.ckpt
//! logs/<stage>.log
//! reports/<setting>.csv, reports/summary.csv
//! ```
//!
//! Every stage reads only the config and earlier outputs, so reruns with the
//! same inputs reproduce their files byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::geo::{
    build_splits, decode_scene, read_corpus, rotating_records, solve_ground_truth, write_corpus,
    CorpusRecord, Variant,
};
use crate::pipeline::{emit_report, evaluate, stage2_train, stage3_train, EvalReport, Limits};
use crate::policy::{
    load_checkpoint, save_checkpoint, Checkpoint, OptimizerState, PolicyParameters, Role,
};
use crate::rng::derive_seed;
use crate::sft::{datasets_from_records, sft_train};
use crate::trainlog::TrainLog;
use crate::vocab::Vocabulary;
use crate::Policy;

/// Training stages, used to name checkpoints and to report missing inputs.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Stage {
    Data,
    Sft,
    Stage2,
    /// Reasoner RL against the stage-2 interpreter.
    Stage3,
    /// Reasoner RL against the SFT interpreter (ablation).
    Stage3OnSft,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Data => "gen-data",
            Stage::Sft => "sft",
            Stage::Stage2 => "rl-stage2",
            Stage::Stage3 => "rl-stage3",
            Stage::Stage3OnSft => "rl-stage3-on-sft",
        }
    }

    fn tag(self) -> u64 {
        self as u64
    }
}

/// The four trained combinations compared by `full_run`.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Setting {
    Sft,
    S2,
    S3,
    S2S3,
}

impl Setting {
    pub const ALL: [Setting; 4] = [Setting::Sft, Setting::S2, Setting::S3, Setting::S2S3];

    pub fn name(self) -> &'static str {
        match self {
            Setting::Sft => "sft",
            Setting::S2 => "sft+s2",
            Setting::S3 => "sft+s3",
            Setting::S2S3 => "sft+s2+s3",
        }
    }

    /// Interpreter and reasoner checkpoint stages.
    pub fn stages(self) -> (Stage, Stage) {
        match self {
            Setting::Sft => (Stage::Sft, Stage::Sft),
            Setting::S2 => (Stage::Stage2, Stage::Sft),
            Setting::S3 => (Stage::Sft, Stage::Stage3OnSft),
            Setting::S2S3 => (Stage::Stage2, Stage::Stage3),
        }
    }

    pub fn parse(s: &str) -> Result<Setting> {
        Setting::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown setting {s:?}; expected one of sft, sft+s2, sft+s3, sft+s2+s3"
                ))
            })
    }
}

pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Workspace { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn train_corpus(&self) -> PathBuf {
        self.root.join("data/train.tsv")
    }

    pub fn heldout_corpus(&self) -> PathBuf {
        self.root.join("data/heldout.tsv")
    }

    pub fn rl_corpus(&self) -> PathBuf {
        self.root.join("data/rl.tsv")
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("data/manifest.txt")
    }

    pub fn checkpoint(&self, role: Role, stage: Stage) -> PathBuf {
        let stage = match stage {
            Stage::Sft => "sft",
            Stage::Stage2 => "s2",
            Stage::Stage3 => "s3",
            Stage::Stage3OnSft => "s3-on-sft",
            Stage::Data => "data",
        };
        self.root.join(format!("ckpt/{role}-{stage}.ckpt"))
    }

    pub fn log(&self, stage: Stage) -> PathBuf {
        self.root.join(format!("logs/{}.log", stage.name()))
    }

    pub fn report(&self, setting: Setting) -> PathBuf {
        self.root.join(format!("reports/{}.csv", setting.name()))
    }

    pub fn summary(&self) -> PathBuf {
        self.root.join("reports/summary.csv")
    }

    fn ensure_dirs(&self) -> Result<()> {
        for d in ["data", "ckpt", "logs", "reports"] {
            let p = self.root.join(d);
            fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }

    fn require(&self, path: PathBuf, stage: Stage) -> Result<PathBuf> {
        if path.exists() {
            Ok(path)
        } else {
            Err(Error::MissingPrerequisite {
                stage: stage.name().to_string(),
                path,
            })
        }
    }

    fn load(&self, role: Role, stage: Stage) -> Result<Policy> {
        let path = self.require(self.checkpoint(role, stage), stage)?;
        let ck = load_checkpoint(&path, Vocabulary::standard())?;
        if ck.params.role() != role {
            return Err(Error::Checkpoint(format!(
                "{} holds a {} policy, expected {role}",
                path.display(),
                ck.params.role()
            )));
        }
        Ok(ck.params)
    }

    fn save(
        &self,
        params: &Policy,
        optimizer: &OptimizerState<f64>,
        cfg: &ExperimentConfig,
        stage: Stage,
    ) -> Result<()> {
        let ck = Checkpoint {
            params: params.clone(),
            optimizer: optimizer.clone(),
            config: cfg.to_text(),
        };
        save_checkpoint(&self.checkpoint(params.role(), stage), &ck)
    }

    fn train_records(&self) -> Result<Vec<CorpusRecord>> {
        read_corpus(&self.require(self.train_corpus(), Stage::Data)?)
    }

    fn rl_records(&self) -> Result<Vec<CorpusRecord>> {
        read_corpus(&self.require(self.rl_corpus(), Stage::Data)?)
    }

    fn heldout_records(&self) -> Result<Vec<CorpusRecord>> {
        read_corpus(&self.require(self.heldout_corpus(), Stage::Data)?)
    }
}

fn stage_seed(cfg: &ExperimentConfig, stage: Stage, salt: u64) -> u64 {
    derive_seed(cfg.seed, &[stage.tag(), salt])
}

pub fn limits(cfg: &ExperimentConfig) -> Limits {
    Limits {
        interpreter: cfg.stage2.max_output_len,
        reasoner: cfg.stage3.max_output_len,
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Generates both corpora and a manifest. Every hundredth record is
/// re-solved from its decoded scene channel as a consistency check.
pub fn gen_data(cfg: &ExperimentConfig, ws: &Workspace) -> Result<()> {
    ws.ensure_dirs()?;
    let d = &cfg.data;
    let (train, heldout) = build_splits(
        cfg.seed,
        d.n_train,
        d.n_heldout,
        d.min_complexity,
        d.max_complexity,
    )?;
    let first_rl = d.n_train + d.n_heldout;
    let rl = rotating_records(
        cfg.seed,
        first_rl..first_rl + d.n_rl,
        d.min_complexity,
        d.max_complexity,
    )?;
    for (i, rec) in train
        .iter()
        .chain(&heldout)
        .chain(&rl)
        .enumerate()
        .step_by(100)
    {
        let scene = decode_scene(&rec.input.scene_channel)?;
        let x = solve_ground_truth(&scene)?;
        if x != rec.choices[rec.gt.index()] {
            return Err(Error::Inconsistent(format!(
                "record {i}: solver says {x}, answer key says {}",
                rec.choices[rec.gt.index()]
            )));
        }
    }
    write_corpus(&ws.train_corpus(), &train)?;
    write_corpus(&ws.heldout_corpus(), &heldout)?;
    write_corpus(&ws.rl_corpus(), &rl)?;
    let manifest = format!(
        "seed={}\nn_train={}\nn_heldout={}\nn_rl={}\ntrain_records={}\nheldout_records={}\nrl_records={}\nvocab_sha256={}\n",
        cfg.seed,
        d.n_train,
        d.n_heldout,
        d.n_rl,
        train.len(),
        heldout.len(),
        rl.len(),
        sha256_hex(&Vocabulary::standard().content_hash()),
    );
    let path = ws.manifest();
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))
}

/// Stage 1: supervised training of both policies from fresh initializations.
pub fn sft(cfg: &ExperimentConfig, ws: &Workspace) -> Result<()> {
    ws.ensure_dirs()?;
    let train = ws.train_records()?;
    let (interp_ds, reason_ds) = datasets_from_records(&train, &cfg.data);
    let v = Vocabulary::standard();
    let mut log = TrainLog::new();
    for (role, model, train_cfg, ds, salt) in [
        (
            Role::Interpreter,
            cfg.interpreter,
            &cfg.sft_interpreter,
            &interp_ds,
            1u64,
        ),
        (
            Role::Reasoner,
            cfg.reasoner,
            &cfg.sft_reasoner,
            &reason_ds,
            2u64,
        ),
    ] {
        let init = PolicyParameters::init(
            v,
            model.context,
            model.embed,
            model.hidden,
            stage_seed(cfg, Stage::Sft, salt),
            role,
        )?;
        let tc = crate::config::TrainingConfig {
            seed: stage_seed(cfg, Stage::Sft, train_cfg.seed ^ (salt << 32)),
            ..train_cfg.clone()
        };
        let out = sft_train(&init, ds, &tc, &format!("sft-{role}"))?;
        ws.save(&out.params, &out.optimizer, cfg, Stage::Sft)?;
        log.extend(out.log);
    }
    log.write(&ws.log(Stage::Sft))
}

/// Stage 2: interpreter RL against the frozen SFT reasoner.
pub fn rl_stage2(cfg: &ExperimentConfig, ws: &Workspace) -> Result<()> {
    let interp = ws.load(Role::Interpreter, Stage::Sft)?;
    let reasoner = ws.load(Role::Reasoner, Stage::Sft)?;
    let problems = ws.rl_records()?;
    ws.ensure_dirs()?;
    let seed = stage_seed(cfg, Stage::Stage2, cfg.stage2.seed);
    let out = stage2_train(
        &interp,
        &reasoner,
        &problems,
        &cfg.stage2,
        limits(cfg),
        seed,
        Stage::Stage2.name(),
    )?;
    ws.save(&out.params, &out.optimizer, cfg, Stage::Stage2)?;
    out.log.write(&ws.log(Stage::Stage2))
}

/// Stage 3: reasoner RL against a frozen interpreter, the stage-2 one unless
/// `on_sft` asks for the SFT interpreter.
pub fn rl_stage3(cfg: &ExperimentConfig, ws: &Workspace, on_sft: bool) -> Result<()> {
    let (base, stage) = if on_sft {
        (Stage::Sft, Stage::Stage3OnSft)
    } else {
        (Stage::Stage2, Stage::Stage3)
    };
    let interp = ws.load(Role::Interpreter, base)?;
    let reasoner = ws.load(Role::Reasoner, Stage::Sft)?;
    let problems = ws.rl_records()?;
    ws.ensure_dirs()?;
    let seed = stage_seed(cfg, stage, cfg.stage3.seed);
    let out = stage3_train(
        &interp,
        &reasoner,
        &problems,
        &cfg.stage3,
        limits(cfg),
        seed,
        stage.name(),
    )?;
    ws.save(&out.params, &out.optimizer, cfg, stage)?;
    out.log.write(&ws.log(stage))
}

/// Evaluates one setting on the held-out corpus and writes its report.
pub fn eval(cfg: &ExperimentConfig, ws: &Workspace, setting: Setting) -> Result<EvalReport> {
    ws.ensure_dirs()?;
    let (si, sr) = setting.stages();
    let interp = ws.load(Role::Interpreter, si)?;
    let reasoner = ws.load(Role::Reasoner, sr)?;
    let heldout = ws.heldout_records()?;
    let mut report = evaluate(&interp, &reasoner, &heldout, limits(cfg))?;
    report.seed = cfg.seed;
    report.checkpoints = vec![
        ws.checkpoint(Role::Interpreter, si).display().to_string(),
        ws.checkpoint(Role::Reasoner, sr).display().to_string(),
    ];
    emit_report(&report, &ws.report(setting))?;
    Ok(report)
}

/// Accuracy of every setting, in [`Setting::ALL`] order.
pub struct Summary {
    pub reports: Vec<(Setting, EvalReport)>,
}

impl Summary {
    pub fn get(&self, s: Setting) -> &EvalReport {
        &self
            .reports
            .iter()
            .find(|(x, _)| *x == s)
            .expect("all settings evaluated")
            .1
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("setting");
        for v in Variant::ALL {
            s.push(',');
            s.push_str(v.name());
        }
        s.push_str(",overall\n");
        for (setting, r) in &self.reports {
            s.push_str(setting.name());
            for v in Variant::ALL {
                s.push_str(&format!(",{:.1}", r.accuracy(v)));
            }
            s.push_str(&format!(",{:.1}\n", r.overall()));
        }
        s
    }
}

/// Data, SFT, both RL stages (plus the stage-3-only ablation) and evaluation
/// of all four settings.
pub fn full_run(cfg: &ExperimentConfig, ws: &Workspace) -> Result<Summary> {
    gen_data(cfg, ws)?;
    sft(cfg, ws)?;
    rl_stage2(cfg, ws)?;
    rl_stage3(cfg, ws, false)?;
    rl_stage3(cfg, ws, true)?;
    let reports = Setting::ALL
        .iter()
        .map(|&s| Ok((s, eval(cfg, ws, s)?)))
        .collect::<Result<Vec<_>>>()?;
    let summary = Summary { reports };
    let path = ws.summary();
    fs::write(&path, summary.to_csv()).map_err(|e| Error::io(&path, e))?;
    Ok(summary)
}
