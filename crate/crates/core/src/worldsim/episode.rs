//! Episode records and their JSON-lines file format: one episode per line.
//! Floats are written in shortest round-trip form and parsed exactly, so a
//! write/read cycle is bitwise lossless.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::BoxInit;
use crate::bimanual::{ArmSide, BimanualState};
use crate::kinematics::IkBranch;

pub const EPISODE_SCHEMA: &str = "episode_v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Approach,
    Grasp,
    Transport,
    Release,
    Retreat,
}

/// One knot: the observed state and the commanded next state, each
/// `[q_L(7), q_R(7), g_L, g_R]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub t_index: usize,
    pub observation: [f64; 16],
    pub action: [f64; 16],
    pub phase: Phase,
    pub lock_active: bool,
}

impl Step {
    pub fn observed_state(&self) -> BimanualState {
        BimanualState::from_slice(&self.observation).expect("16 entries")
    }

    pub fn commanded_state(&self) -> BimanualState {
        BimanualState::from_slice(&self.action).expect("16 entries")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    GraspAttach { arm: ArmSide },
    GraspDetach { arm: ArmSide },
    BoxDrop,
    Placed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub t_index: usize,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetadata {
    pub seed: u64,
    pub box_init: BoxInit,
    pub control_arm: ArmSide,
    /// Constant SEW angles `[left, right]` used by the script.
    pub psi: [f64; 2],
    pub branch: IkBranch,
    pub perturbation_level: Option<u8>,
    pub eta: f64,
    pub perturbation_seed: Option<u64>,
    /// Transport knots left unperturbed because IK failed.
    pub ik_failures: usize,
    pub truncated: bool,
    pub config_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub schema_version: String,
    pub model_ref: String,
    pub dt: f64,
    pub steps: Vec<Step>,
    /// World event log; absent once actions no longer match a simulated run.
    pub events: Option<Vec<Event>>,
    pub metadata: EpisodeMetadata,
}

impl Episode {
    /// Indices of transport-phase steps.
    pub fn transport_indices(&self) -> Vec<usize> {
        self.steps.iter().enumerate().filter(|(_, s)| s.phase == Phase::Transport).map(|(i, _)| i).collect()
    }

    pub fn initial_state(&self) -> Option<BimanualState> {
        self.steps.first().map(Step::observed_state)
    }

    /// Knot actions as a flat list.
    pub fn actions(&self) -> Vec<[f64; 16]> {
        self.steps.iter().map(|s| s.action).collect()
    }
}

#[derive(Debug, Error)]
pub enum EpisodeIoError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: schema_version {found:?}, expected {EPISODE_SCHEMA:?}")]
    SchemaMismatch { line: usize, found: String },
    #[error("line {line}: malformed record: {message}")]
    MalformedRecord { line: usize, message: String },
}

pub fn write_episodes(path: &Path, episodes: &[Episode]) -> Result<(), EpisodeIoError> {
    let io = |source| EpisodeIoError::Io { path: path.display().to_string(), source };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for e in episodes {
        serde_json::to_writer(&mut w, e).map_err(|e| io(e.into()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

#[derive(Deserialize)]
struct SchemaProbe {
    schema_version: String,
}

pub fn read_episodes(path: &Path) -> Result<Vec<Episode>, EpisodeIoError> {
    let io = |source| EpisodeIoError::Io { path: path.display().to_string(), source };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed =
            |e: serde_json::Error| EpisodeIoError::MalformedRecord { line: line_no, message: e.to_string() };
        let probe: SchemaProbe = serde_json::from_str(&line).map_err(malformed)?;
        if probe.schema_version != EPISODE_SCHEMA {
            return Err(EpisodeIoError::SchemaMismatch { line: line_no, found: probe.schema_version });
        }
        out.push(serde_json::from_str(&line).map_err(malformed)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_episode(seed: u64) -> Episode {
        let mut steps = Vec::new();
        for t in 0..5 {
            let mut obs = [0.0; 16];
            let mut act = [0.0; 16];
            for (k, v) in obs.iter_mut().enumerate() {
                *v = (seed as f64 + 0.1 * t as f64 + k as f64 / 3.0).sin();
            }
            for (k, v) in act.iter_mut().enumerate() {
                *v = (seed as f64 + 0.1 * (t + 1) as f64 + k as f64 / 7.0).cos() * 1e-7;
            }
            steps.push(Step { t_index: t, observation: obs, action: act, phase: Phase::Transport, lock_active: true });
        }
        Episode {
            schema_version: EPISODE_SCHEMA.into(),
            model_ref: "toy".into(),
            dt: 0.1,
            steps,
            events: Some(vec![
                Event { t_index: 1, kind: EventKind::GraspAttach { arm: ArmSide::Left } },
                Event { t_index: 4, kind: EventKind::Placed },
            ]),
            metadata: EpisodeMetadata {
                seed,
                box_init: BoxInit::new(0.1, 0.6, -0.05),
                control_arm: ArmSide::Right,
                psi: [1.0 / 3.0, -2.0 / 3.0],
                branch: IkBranch::default(),
                perturbation_level: None,
                eta: 0.0,
                perturbation_seed: None,
                ik_failures: 0,
                truncated: false,
                config_hash: "abc".into(),
            },
        }
    }

    #[test]
    fn write_read_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("eps.jsonl");
        let eps: Vec<Episode> = (0..50).map(toy_episode).collect();
        write_episodes(&path, &eps).unwrap();
        let back = read_episodes(&path).unwrap();
        assert_eq!(back, eps);
        for (a, b) in back.iter().zip(eps.iter()) {
            for (sa, sb) in a.steps.iter().zip(b.steps.iter()) {
                assert_eq!(sa.action.map(f64::to_bits), sb.action.map(f64::to_bits));
            }
        }
    }

    #[test]
    fn truncated_line_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("eps.jsonl");
        write_episodes(&path, &[toy_episode(1), toy_episode(2)]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &text[..text.len() - 40]).unwrap();
        match read_episodes(&path) {
            Err(EpisodeIoError::MalformedRecord { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected malformed record, got {other:?}"),
        }
    }

    #[test]
    fn unknown_schema_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("eps.jsonl");
        let mut e = toy_episode(1);
        e.schema_version = "v999".into();
        write_episodes(&path, &[e]).unwrap();
        assert!(matches!(read_episodes(&path), Err(EpisodeIoError::SchemaMismatch { line: 1, .. })));
    }
}
