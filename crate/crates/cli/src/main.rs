fn main() {
    if let Err(e) = extinction_cli::run(std::env::args_os()) {
        let msg = e.message.trim_end();
        match e.code {
            0 => println!("{msg}"),
            _ if msg.starts_with("error:") => eprintln!("{msg}"),
            _ => eprintln!("error: {msg}"),
        }
        std::process::exit(e.code);
    }
}
