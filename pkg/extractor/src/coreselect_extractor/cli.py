"""Command line front end for the image embedding extractor."""
import argparse
import logging
import sys

from coreselect.errors import ConfigError, DataError, NumericError

from .extract import ExtractionJob, extract


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="extract",
        description="Extract VGG16 last-pooling-layer embeddings from a "
                    "directory of class-labeled images.")
    p.add_argument("--input", required=True, help="root directory, one subdirectory per class")
    p.add_argument("--output", required=True, help="embedding file to write")
    p.add_argument("--format", choices=["csv", "binary"], default="binary")
    p.add_argument("--strict", action="store_true",
                   help="abort on undecodable images instead of skipping")
    p.add_argument("--batch", type=int, default=16, metavar="N")
    p.add_argument("--weights", default=None,
                   help="local state dict file; defaults to the torchvision download")
    p.add_argument("--quiet", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr,
                        level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        extract(ExtractionJob(input_dir=args.input, output_path=args.output,
                              format=args.format, strict=args.strict,
                              batch_size=args.batch, weights=args.weights))
    except ConfigError as e:
        logging.getLogger("extract").error("%s", e)
        return 2
    except DataError as e:
        logging.getLogger("extract").error("%s", e)
        return 3
    except NumericError as e:
        logging.getLogger("extract").error("%s", e)
        return 4
    except OSError as e:
        logging.getLogger("extract").error("%s", e)
        return 5
    return 0


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
