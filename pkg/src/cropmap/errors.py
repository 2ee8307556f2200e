"""Exceptions raised by the binary codecs (tile files and forest model files)."""


class FileFormatError(Exception):
    """A file does not conform to the expected binary layout."""


class BadMagicError(FileFormatError):
    """The file does not start with the expected magic bytes."""


class VersionMismatchError(FileFormatError):
    """The file declares a format version this reader does not support."""


class TruncatedFileError(FileFormatError):
    """The file ends before the declared payload is complete."""


class ChecksumError(FileFormatError):
    """The CRC32 trailer does not match the file contents."""
