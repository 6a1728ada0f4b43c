//! Chunked execution: a source predicts `chunk` actions from the latest two
//! observations, the first `execute` of them are run with a first-order
//! hold between knots, and the world is stepped at every substep.

use super::{
    AttachState, Episode, EpisodeMetadata, Event, Phase, Step, TaskWorld, TaskWorldConfig, WorldsimError,
    EPISODE_SCHEMA,
};
use crate::bimanual::{BimanualModel, BimanualState};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChunkConfig {
    pub chunk: usize,
    pub execute: usize,
    /// Safety cap on executed knots.
    pub max_steps: usize,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        Self { chunk: 16, execute: 8, max_steps: 10_000 }
    }
}

/// Produces action chunks. `history` holds the last two observations,
/// oldest first (the single initial observation is repeated at the start).
pub trait ActionSource {
    /// `None` ends the stream.
    fn next_chunk(&mut self, t: usize, history: &[BimanualState; 2], chunk: usize) -> Option<Vec<[f64; 16]>>;
}

/// Replays a fixed action list; chunks past the end are shortened.
pub struct ReplaySource {
    actions: Vec<[f64; 16]>,
}

impl ReplaySource {
    pub fn new(actions: Vec<[f64; 16]>) -> Self {
        Self { actions }
    }

    pub fn from_episode(e: &Episode) -> Self {
        Self::new(e.actions())
    }
}

impl ActionSource for ReplaySource {
    fn next_chunk(&mut self, t: usize, _history: &[BimanualState; 2], chunk: usize) -> Option<Vec<[f64; 16]>> {
        if t >= self.actions.len() {
            return None;
        }
        Some(self.actions[t..(t + chunk).min(self.actions.len())].to_vec())
    }
}

/// `a + s·(b − a)`, exact at `s = 0`, at `s = 1`, and for `a = b`.
pub fn first_order_hold(a: &[f64; 16], b: &[f64; 16], s: f64) -> [f64; 16] {
    if s >= 1.0 {
        return *b;
    }
    std::array::from_fn(|i| a[i] + s * (b[i] - a[i]))
}

fn phase_of(attach: &AttachState) -> Phase {
    match attach {
        AttachState::Free => Phase::Approach,
        AttachState::Grasped { .. } => Phase::Transport,
        AttachState::Dropped | AttachState::Placed => Phase::Retreat,
    }
}

/// Run `source` from `initial` in `world`.
///
/// Knot states equal the commanded actions (the world is kinematic), so a
/// replayed demonstration reproduces its knots exactly. Returns
/// `StreamExhausted` with the partial, flagged episode when the stream ends
/// before the box is placed or dropped.
pub fn execute_chunked(
    model: &BimanualModel,
    world: TaskWorld,
    initial: BimanualState,
    source: &mut dyn ActionSource,
    cfg: ChunkConfig,
    metadata: EpisodeMetadata,
    model_ref: &str,
) -> Result<Episode, WorldsimError> {
    assert!(cfg.execute >= 1 && cfg.execute <= cfg.chunk, "execute must lie in 1..=chunk");
    let substeps = world.config.substeps;
    let mut world = world;
    let mut state = initial.to_vector();
    let mut history = [initial, initial];
    let mut steps = Vec::new();
    let mut events = Vec::new();

    let exhausted = loop {
        if steps.len() >= cfg.max_steps {
            break !world.attach.is_terminal();
        }
        let Some(chunk) = source.next_chunk(steps.len(), &history, cfg.chunk) else {
            break !world.attach.is_terminal();
        };
        if chunk.is_empty() {
            break !world.attach.is_terminal();
        }
        for action in chunk.iter().take(cfg.execute) {
            let t = steps.len();
            let lock_before = matches!(world.attach, AttachState::Grasped { .. });
            let mut prev_cmd = BimanualState::from_slice(&state).expect("16 entries");
            for k in 1..=substeps {
                let cmd_vec = first_order_hold(&state, action, k as f64 / substeps as f64);
                let cmd = BimanualState::from_slice(&cmd_vec).expect("16 entries");
                let (w1, ev) = super::step_world(&world, model, &prev_cmd, &cmd);
                world = w1;
                events.extend(ev.into_iter().map(|kind| Event { t_index: t, kind }));
                prev_cmd = cmd;
            }
            let phase = if lock_before { Phase::Transport } else { phase_of(&world.attach) };
            steps.push(Step {
                t_index: t,
                observation: state,
                action: *action,
                phase,
                lock_active: phase == Phase::Transport,
            });
            state = *action;
            history = [history[1], BimanualState::from_slice(&state).expect("16 entries")];
            if steps.len() >= cfg.max_steps {
                break;
            }
        }
    };

    let mut episode = Episode {
        schema_version: EPISODE_SCHEMA.into(),
        model_ref: model_ref.into(),
        dt: world.config.dt,
        steps,
        events: Some(events),
        metadata,
    };
    if exhausted {
        episode.metadata.truncated = true;
        return Err(WorldsimError::StreamExhausted { partial: Box::new(episode) });
    }
    Ok(episode)
}

/// Event log of `episode`'s actions executed in a fresh world at its box
/// init; a stream that ends before a terminal state yields its partial log.
pub fn replay_events(
    model: &BimanualModel,
    config: &TaskWorldConfig,
    episode: &Episode,
) -> Result<Vec<Event>, WorldsimError> {
    let initial = episode.initial_state().ok_or_else(|| WorldsimError::Config("episode has no steps".into()))?;
    let world = TaskWorld::new(config.clone(), episode.metadata.box_init);
    let mut source = ReplaySource::from_episode(episode);
    let run = execute_chunked(
        model,
        world,
        initial,
        &mut source,
        ChunkConfig::default(),
        episode.metadata.clone(),
        &episode.model_ref,
    );
    match run {
        Ok(e) => Ok(e.events.unwrap_or_default()),
        Err(WorldsimError::StreamExhausted { partial }) => Ok(partial.events.unwrap_or_default()),
        Err(e) => Err(e),
    }
}

/// Surrogate rollout: the episode with its event log recomputed by replay.
pub fn surrogate_rollout(
    model: &BimanualModel,
    config: &TaskWorldConfig,
    episode: &Episode,
) -> Result<Episode, WorldsimError> {
    let mut out = episode.clone();
    out.events = Some(replay_events(model, config, episode)?);
    Ok(out)
}
