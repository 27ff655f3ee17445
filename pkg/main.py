import sys

import qrng


if __name__ == '__main__':
    try:
        sys.exit(qrng.starter())

    except KeyboardInterrupt:
        print('\b\bПрервано.')
        sys.exit(130)
