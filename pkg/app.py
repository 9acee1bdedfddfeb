"""MkfaNet command-line application"""
import logging
import sys

from mkfa.src.handlers.cli import run

# Setup logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s | %(levelname)s | %(message)s',
    datefmt='%H:%M:%S',
    stream=sys.stderr,
)
log = logging.getLogger(__name__)


def main() -> int:
    """Main application entry point"""
    return run(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
