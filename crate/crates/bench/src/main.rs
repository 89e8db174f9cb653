fn main() -> anyhow::Result<()> {
    flowbench::cli::run()
}
