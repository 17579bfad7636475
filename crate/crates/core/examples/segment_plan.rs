use homsync::config::bundled_20km;
use homsync::planner::{evaluate_plan, plan_segments};
use homsync::scenario::Scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sc = Scenario::build(bundled_20km())?;
    let c = sc.plan_constraints()?;
    let plan = plan_segments(&c)?;
    println!("limit {:.3} ps, budget {} dB", c.drift_limit() * 1e12, c.loss_budget);
    for row in &plan.table {
        println!(
            "m = {:>2}: {:.3} ps, {:.2} dB{}",
            row.m,
            row.drift * 1e12,
            row.loss,
            if row.feasible { "" } else { "  ✗" }
        );
    }
    println!("chosen: {} × {:.0} m", plan.lengths.len(), plan.lengths[0]);
    // Unequal split for comparison.
    let e = evaluate_plan(&[5e3, 4e3, 1e3], &c)?;
    println!("5+4+1 km: {:.3} ps, {:.2} dB", e.drift * 1e12, e.loss);
    Ok(())
}
