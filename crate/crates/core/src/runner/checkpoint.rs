//! Run checkpoints: one tensor file per network plus a `state.txt` sidecar.

use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;

use crate::baselines::SacAgent;
use crate::crl::{CriticArch, CriticParams, CrlAgent, Policy};
use crate::numcore::{checkpoint, Mlp, NamedTensor};
use crate::runner::config::Algorithm;
use crate::{Error, Result};

/// Everything in the sidecar.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointState {
    pub algorithm: Algorithm,
    pub critic_arch: CriticArch,
    pub obs_dim: usize,
    pub min_std: f64,
    pub env_step: u64,
    pub episode: u64,
    pub updates: u64,
    pub log_alpha: f64,
    pub first_success_episode: Option<u64>,
    pub rng_seed: [u8; 32],
    pub rng_stream: u64,
    pub rng_word_pos: u128,
}

impl CheckpointState {
    pub fn rng_snapshot(&mut self, rng: &ChaCha8Rng) {
        self.rng_seed = rng.get_seed();
        self.rng_stream = rng.get_stream();
        self.rng_word_pos = rng.get_word_pos();
    }

    pub fn restore_rng(&self) -> ChaCha8Rng {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::from_seed(self.rng_seed);
        rng.set_stream(self.rng_stream);
        rng.set_word_pos(self.rng_word_pos);
        rng
    }

    fn to_text(&self) -> String {
        let seed: String = self.rng_seed.iter().map(|b| format!("{b:02x}")).collect();
        let first = self
            .first_success_episode
            .map_or_else(|| "none".to_string(), |e| e.to_string());
        format!(
            "algorithm = {}\ncritic_arch = {}\nobs_dim = {}\nmin_std = {:?}\nenv_step = {}\n\
             episode = {}\nupdates = {}\nlog_alpha = {:?}\nfirst_success_episode = {first}\n\
             rng_seed = {seed}\nrng_stream = {}\nrng_word_pos = {}\n",
            self.algorithm.as_str(),
            self.critic_arch.as_str(),
            self.obs_dim,
            self.min_std,
            self.env_step,
            self.episode,
            self.updates,
            self.log_alpha,
            self.rng_stream,
            self.rng_word_pos,
        )
    }

    fn parse(text: &str) -> Result<Self> {
        let ctx = "checkpoint state";
        let get = |key: &str| -> Result<&str> {
            text.lines()
                .filter_map(|l| l.split_once('='))
                .find(|(k, _)| k.trim() == key)
                .map(|(_, v)| v.trim())
                .ok_or_else(|| Error::parse(ctx, format!("missing {key}")))
        };
        let num = |key: &str| -> Result<u64> {
            get(key)?
                .parse()
                .map_err(|e| Error::parse(ctx, format!("{key}: {e}")))
        };
        let float = |key: &str| -> Result<f64> {
            get(key)?
                .parse()
                .map_err(|e| Error::parse(ctx, format!("{key}: {e}")))
        };
        let hex = get("rng_seed")?;
        if hex.len() != 64 {
            return Err(Error::parse(ctx, "rng_seed must be 64 hex digits"));
        }
        let mut rng_seed = [0u8; 32];
        for (i, b) in rng_seed.iter_mut().enumerate() {
            *b = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16)
                .map_err(|e| Error::parse(ctx, format!("rng_seed: {e}")))?;
        }
        Ok(Self {
            algorithm: get("algorithm")?.parse()?,
            critic_arch: get("critic_arch")?.parse()?,
            obs_dim: num("obs_dim")? as usize,
            min_std: float("min_std")?,
            env_step: num("env_step")?,
            episode: num("episode")?,
            updates: num("updates")?,
            log_alpha: float("log_alpha")?,
            first_success_episode: match get("first_success_episode")? {
                "none" => None,
                v => Some(
                    v.parse()
                        .map_err(|e| Error::parse(ctx, format!("first_success_episode: {e}")))?,
                ),
            },
            rng_seed,
            rng_stream: num("rng_stream")?,
            rng_word_pos: get("rng_word_pos")?
                .parse()
                .map_err(|e| Error::parse(ctx, format!("rng_word_pos: {e}")))?,
        })
    }
}

/// The trainable state of either algorithm.
#[derive(Debug, Clone)]
pub enum Learner {
    Crl(CrlAgent),
    Sac(SacAgent),
}

impl Learner {
    pub fn policy(&self) -> &Policy {
        match self {
            Learner::Crl(a) => &a.policy,
            Learner::Sac(a) => &a.policy,
        }
    }

    pub fn log_alpha(&self) -> f64 {
        match self {
            Learner::Crl(a) => a.alpha.log_alpha,
            Learner::Sac(a) => a.alpha.log_alpha,
        }
    }

    pub fn updates(&self) -> u64 {
        match self {
            Learner::Crl(a) => a.updates(),
            Learner::Sac(a) => a.updates(),
        }
    }

    pub fn critic(&self) -> Option<&CriticParams> {
        match self {
            Learner::Crl(a) => Some(&a.critic),
            Learner::Sac(_) => None,
        }
    }

    fn networks(&self) -> Vec<(&'static str, &Mlp)> {
        match self {
            Learner::Crl(a) => {
                let mut v = a.critic.networks();
                v.push(("policy", &a.policy.net));
                v
            }
            Learner::Sac(a) => vec![
                ("q1", &a.q1),
                ("q2", &a.q2),
                ("q1_target", &a.q1_target),
                ("q2_target", &a.q2_target),
                ("policy", &a.policy.net),
            ],
        }
    }
}

pub fn save(dir: &Path, learner: &Learner, state: &CheckpointState) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, net) in learner.networks() {
        checkpoint::save(&dir.join(format!("{name}.bin")), &net.to_tensors(name))?;
    }
    let path = dir.join("state.txt");
    fs::write(&path, state.to_text()).map_err(|e| Error::io(&path, e))
}

/// Networks restored from a checkpoint directory.
#[derive(Debug, Clone)]
pub struct LoadedCheckpoint {
    pub state: CheckpointState,
    pub policy: Policy,
    /// Present for the contrastive agent.
    pub critic: Option<CriticParams>,
    /// `(q1, q2, q1_target, q2_target)` for SAC.
    pub q_nets: Option<[Mlp; 4]>,
}

pub fn load(dir: &Path) -> Result<LoadedCheckpoint> {
    let path = dir.join("state.txt");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let state = CheckpointState::parse(&text)?;
    let read = |name: &str| -> Result<Vec<NamedTensor>> {
        checkpoint::load(&dir.join(format!("{name}.bin")))
    };
    let net = |name: &str| -> Result<Mlp> { Mlp::from_tensors(name, &read(name)?) };
    let policy = Policy::from_net(net("policy")?, state.obs_dim, state.min_std)?;
    let (critic, q_nets) = match state.algorithm {
        Algorithm::Crl => (
            Some(CriticParams::from_networks(state.critic_arch, read)?),
            None,
        ),
        _ => (
            None,
            Some([net("q1")?, net("q2")?, net("q1_target")?, net("q2_target")?]),
        ),
    };
    Ok(LoadedCheckpoint {
        state,
        policy,
        critic,
        q_nets,
    })
}
