"""Entry point: ``python -m app.main <command> [options]``."""
import logging
import sys

from app.cli import run
from app.errors import ContlexError
from app.utils.logger import setup_logging

logger = logging.getLogger(__name__)


def main(argv=None) -> int:
    """Run one CLI command and map failures onto exit codes.

    0 ok, 2 config/usage error, 3 data/format error, 4 numeric failure,
    1 anything unexpected.
    """
    setup_logging()
    try:
        return run(argv)
    except ContlexError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except KeyboardInterrupt:
        logger.warning("Interrupted")
        return 130
    except Exception as e:
        logger.error(f"Unexpected error: {e}", exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
