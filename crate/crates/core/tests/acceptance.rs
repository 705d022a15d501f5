//! Runs every acceptance criterion and prints one line per criterion.

use std::process::ExitCode;

fn main() -> ExitCode {
    let filter: Vec<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, _) in modcap::acceptance::CRITERIA {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let r = modcap::acceptance::run_criterion(id);
        println!("{r}");
        failed += !r.passed as usize;
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        println!("all acceptance criteria passed");
        ExitCode::SUCCESS
    }
}
