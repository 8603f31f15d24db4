import os
import sys

if __name__ == "__main__":
    # run.py [ENV] COMMAND ...; ENV selects the .env.<ENV> settings file
    env = "dev"
    if len(sys.argv) > 1 and sys.argv[1] in ("dev", "test", "prod"):
        env = sys.argv.pop(1)
    os.environ["ENVIRONMENT"] = env

    from polyfract.cli import run

    sys.exit(run(sys.argv[1:]))
