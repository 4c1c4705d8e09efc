use super::{ConfounderProcess, EnvKind, MarkovProcess, MdpucSpec};

/// Confounder values shared by both benchmarks.
const LEVELS: [f64; 2] = [0.1, 0.2];
const LEVEL_PROBS: [f64; 2] = [0.3, 0.7];

pub const GRID_SIDE: usize = 10;

/// `(row, col)` of a GridWorld state; rows count up from the bottom edge.
pub fn grid_cell(s: usize) -> (usize, usize) {
    (s / GRID_SIDE, s % GRID_SIDE)
}

pub fn grid_state(row: usize, col: usize) -> usize {
    row * GRID_SIDE + col
}

/// Three-state confounded ModelWin.
///
/// From `s0`, action `a0` reaches `s1` with probability `0.7 + u` and `a1`
/// with probability `0.3 + u`; `s1` and `s2` always return to `s0`, paying
/// `10 + 20u` and `-10 - 20u` respectively.
pub fn build_modelwin() -> MdpucSpec {
    let (n_s, n_a, n_u) = (3, 2, LEVELS.len());
    let mut transition = vec![0.0; n_s * n_a * n_u * n_s];
    let mut reward = vec![0.0; n_s * n_a * n_u * n_s];
    for s in 0..n_s {
        for a in 0..n_a {
            for (ui, &u) in LEVELS.iter().enumerate() {
                let base = ((s * n_a + a) * n_u + ui) * n_s;
                let row = &mut transition[base..base + n_s];
                match s {
                    0 => {
                        let p1 = if a == 0 { 0.7 + u } else { 0.3 + u };
                        row[1] = p1;
                        row[2] = 1.0 - p1;
                    }
                    _ => row[0] = 1.0,
                }
                let r = match s {
                    0 => 0.0,
                    1 => 10.0 + 20.0 * u,
                    _ => -10.0 - 20.0 * u,
                };
                reward[base..base + n_s].fill(r);
            }
        }
    }
    MdpucSpec::new(
        EnvKind::ModelWin,
        n_s,
        n_a,
        LEVELS.to_vec(),
        transition,
        reward,
        vec![1.0, 0.0, 0.0],
        ConfounderProcess::Iid(LEVEL_PROBS.to_vec()),
    )
    .expect("ModelWin tables are valid")
}

/// 10x10 confounded GridWorld.
///
/// Actions are up, right, down, left. Moves off the grid leave the agent in
/// place. The top-right goal sends the agent back to the bottom-left start
/// whatever the action, paying `100 + 100u`; elsewhere the reward depends on
/// the action only.
pub fn build_gridworld() -> MdpucSpec {
    let n_s = GRID_SIDE * GRID_SIDE;
    let (n_a, n_u) = (4, LEVELS.len());
    let goal = grid_state(GRID_SIDE - 1, GRID_SIDE - 1);
    let start = grid_state(0, 0);
    let mut transition = vec![0.0; n_s * n_a * n_u * n_s];
    let mut reward = vec![0.0; n_s * n_a * n_u * n_s];
    for s in 0..n_s {
        let (row, col) = grid_cell(s);
        for a in 0..n_a {
            let next = if s == goal {
                start
            } else {
                match a {
                    0 => grid_state((row + 1).min(GRID_SIDE - 1), col),
                    1 => grid_state(row, (col + 1).min(GRID_SIDE - 1)),
                    2 => grid_state(row.saturating_sub(1), col),
                    _ => grid_state(row, col.saturating_sub(1)),
                }
            };
            for (ui, &u) in LEVELS.iter().enumerate() {
                let base = ((s * n_a + a) * n_u + ui) * n_s;
                transition[base + next] = 1.0;
                let r = if s == goal {
                    100.0 + 100.0 * u
                } else {
                    match a {
                        0 => 1.0 + 20.0 * u,
                        1 => 1.0 + 30.0 * u,
                        2 => -1.0 - 30.0 * u,
                        _ => -1.0 - 40.0 * u,
                    }
                };
                reward[base..base + n_s].fill(r);
            }
        }
    }
    let mut start_dist = vec![0.0; n_s];
    start_dist[start] = 1.0;
    MdpucSpec::new(
        EnvKind::GridWorld,
        n_s,
        n_a,
        LEVELS.to_vec(),
        transition,
        reward,
        start_dist,
        ConfounderProcess::Iid(LEVEL_PROBS.to_vec()),
    )
    .expect("GridWorld tables are valid")
}

/// The iid prior mixed with the sticky-switching alternative used for the
/// misspecification sweeps. `alpha = 1` is the nominal iid model.
pub fn nonstationary_alt_process(alpha: f64) -> ConfounderProcess {
    ConfounderProcess::Mixture {
        alpha,
        iid: LEVEL_PROBS.to_vec(),
        markov: MarkovProcess {
            init: LEVEL_PROBS.to_vec(),
            transition: vec![vec![0.08, 0.92], vec![0.82, 0.18]],
        },
    }
}
