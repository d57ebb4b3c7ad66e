//! Four inference nodes walked through the energy/step scheduler, printing
//! energies and steps after every query.

use pqml::scheduler::{NodeState, SchedulerParams, SchedulerPools};
use pqml::{Fixed, NodeId};

const NAMES: [&str; 4] = ["orange", "blue", "green", "grey"];

fn node(i: u64, energy: i64, step: i64, idle: u64) -> NodeState {
    NodeState {
        energy: Fixed::from_int(energy),
        step: Fixed::from_int(step),
        queries_since_assignment: idle,
        ..NodeState::new(NodeId::inference(i), i)
    }
}

fn show(p: &SchedulerPools) {
    for (n, name) in p.inference_pool.iter().zip(NAMES) {
        let bonus = if n.waiting_bonus_active { " +bonus" } else { "" };
        println!("    {name:<6} energy {:>9} step {}{bonus}", n.energy, n.step);
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pool = vec![node(0, 9, 1, 0), node(1, 4, 1, 0), node(2, 3, 2, 0), node(3, 4, 1, 1)];
    let params = SchedulerParams {
        waiting_threshold: 2,
        bonus: Fixed::ONE,
        step_cap: Some(Fixed::from_int(8)),
    };
    let mut p = SchedulerPools::new(pool, vec![], params)?;
    println!("start");
    show(&p);
    for q in 1..=8 {
        let s = p.on_query_arrival(0)?;
        let who = NAMES[s.inference.index as usize];
        // orange and green do good work, the others poor
        let well = matches!(who, "orange" | "green");
        p.on_task_outcome(s.inference, well)?;
        println!(
            "query {q}: {who} selected, {}",
            if well { "did well" } else { "did poorly" }
        );
        show(&p);
    }
    Ok(())
}
