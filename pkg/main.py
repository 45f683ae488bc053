import logging
import sys
from typing import TextIO

from pydantic import ValidationError

from cli.runner import RunConfig, create_parser, run
from core.config import settings
from core.errors import ConvergenceError, DomainError

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_DOMAIN = 2
EXIT_CONVERGENCE = 3


def main(
    argv: list[str] | None = None,
    stdin: TextIO | None = None,
    stdout: TextIO | None = None,
    stderr: TextIO | None = None,
) -> int:
    stderr = stderr or sys.stderr
    args = create_parser().parse_args(argv)

    logging.basicConfig(level=logging.DEBUG if args.verbose else settings.LOG_LEVEL)
    logging.info(f"Starting {settings.PROJECT_NAME}. Environment: {settings.ENVIRONMENT}")

    try:
        cfg = RunConfig.from_namespace(args)
        return run(cfg, stdin=stdin, stdout=stdout)
    except ValidationError as e:
        messages = "; ".join(err["msg"] for err in e.errors())
        print(f"usage error: {messages}", file=stderr)
        return EXIT_DOMAIN
    except DomainError as e:
        print(f"domain error: {e}", file=stderr)
        return EXIT_DOMAIN
    except ConvergenceError as e:
        logging.error(f"{type(e).__name__}: {e}")
        print(f"convergence error: {e}", file=stderr)
        if e.diagnostics:
            details = ", ".join(f"{k}={v!r}" for k, v in e.diagnostics.items())
            print(f"diagnostics: {details}", file=stderr)
        return EXIT_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
