use std::path::Path;
use std::time::Instant;

fn main() {
    let path = std::env::args().nth(1).expect("scenario path");
    let t = Instant::now();
    let scn = epimob::sim::Scenario::load(Path::new(&path)).unwrap();
    eprintln!("loaded in {:?}", t.elapsed());
    let mut sink = epimob::sim::Sink::discard();
    let s = epimob::sim::run(&scn, &mut sink).unwrap();
    eprintln!("ran in {:?}", t.elapsed());
    for d in &s.days {
        let c = d.totals;
        println!("{:3} S{:5} E{:5} I{:5} H{:4} R{:5} D{:3} new{:4}", d.day, c.s, c.e, c.infectious(), c.hosp, c.r, c.d, d.new_exposures);
    }
    println!("peakI {:?} peakE {:?} cum {} contacts {} denied {} fb {} trajfb {} unbound {}", s.peak_infectious(), s.peak_exposed(), s.cumulative_infections(), s.contacts, s.denied_boardings, s.private_fallbacks, s.trajectory_fallbacks, s.unbound_places);
}
