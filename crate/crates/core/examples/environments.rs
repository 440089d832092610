//! Roll out the scripted expert and a random policy on every environment.
//!
//! ```text
//! cargo run --example environments
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cftamer::envs::{run_episode, Cell, Env, EnvId, EnvState};
use cftamer::oracle::ExpertPolicy;

fn render(state: &EnvState) -> Option<String> {
    let EnvState::Grid(g) = state else { return None };
    let mut out = String::new();
    for y in 0..g.height {
        for x in 0..g.width {
            out.push(match (g.cell(x, y), (x, y) == g.agent_pos) {
                (_, true) => '@',
                (Cell::Wall, _) => '#',
                (Cell::Goal, _) => 'G',
                (Cell::Empty, _) => '.',
            });
        }
        out.push('\n');
    }
    Some(out)
}

fn main() {
    for id in EnvId::ALL {
        let mut env = Env::new(id);
        let expert = ExpertPolicy::new(id);
        let seed = 1000;
        if let Some(picture) = render(&env.initial_state(seed)) {
            print!("{picture}");
        }
        let expert_return = run_episode(&mut env, seed, |_, s| expert.act(s)).expect("expert episode");
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = id.action_count();
        let random_return = run_episode(&mut env, seed, |_, _| rng.gen_range(0..n)).expect("random episode");
        println!(
            "{id:<12} actions {:?}  expert return {expert_return:8.2}  random return {random_return:8.2}",
            id.action_names()
        );
    }
}
