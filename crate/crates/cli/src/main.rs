use std::io::Write;

fn main() {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let code = discrepancy_lab::run(std::env::args_os(), &mut out);
    let _ = out.flush();
    std::process::exit(code);
}
