//! Validate trainer-edited gridworld states the way the server does before
//! using one as a counterfactual.
//!
//! ```text
//! cargo run -p cftamer-session --example state_edit
//! ```

use cftamer::envs::{Cell, Direction, GridConfig, GridState};
use cftamer_session::protocol::StateEdit;
use cftamer_session::apply_state_edit;

fn main() {
    let base = GridState::random(&GridConfig::default(), 1000);
    let edit = |f: &dyn Fn(&mut StateEdit)| {
        let mut e = StateEdit {
            width: base.width,
            height: base.height,
            cells: base.cells.clone(),
            agent_pos: base.agent_pos,
            agent_dir: base.agent_dir,
        };
        f(&mut e);
        e
    };

    let candidates = [
        ("turned to face south", edit(&|e| e.agent_dir = Direction::South)),
        ("moved into the border", edit(&|e| e.agent_pos = (0, 1))),
        ("inner wall added", edit(&|e| e.cells[2 * e.width + 3] = Cell::Wall)),
        ("second goal", edit(&|e| e.cells[e.width * (e.height - 2) + 1] = Cell::Goal)),
        ("narrower grid", edit(&|e| e.width -= 1)),
    ];
    for (label, e) in candidates {
        match apply_state_edit(&base, &e) {
            Ok(obs) => println!("{label:<24} accepted, observation of {} values", obs.len()),
            Err(rule) => println!("{label:<24} rejected: {rule}"),
        }
    }
}
