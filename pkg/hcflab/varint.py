"""Varint encoder/decoder

varints are a common encoding for variable length integer data, used in
libraries such as sqlite, protobuf, v8, and more. Checkpoint files frame
their protobuf records with them.

This module adapts from https://github.com/fmoo/python-varint/blob/master/varint.py,
working on binary file objects.
"""


def encode(number):
    """Pack `number` into varint bytes"""
    if number < 0:
        raise ValueError("varint cannot encode negative number {0}".format(number))
    buf = bytearray()
    while True:
        towrite = number & 0x7f
        number >>= 7
        if number:
            buf.append(towrite | 0x80)
        else:
            buf.append(towrite)
            break
    return bytes(buf)


def decode(stream):
    """Read a varint from binary file object `stream`.

    Raises EOFError if the stream ends inside (or before) the varint.
    """
    shift = 0
    result = 0
    while True:
        c = stream.read(1)
        if not c:
            raise EOFError("Unexpected end of stream while reading varint")
        i = ord(c)
        result |= (i & 0x7f) << shift
        shift += 7
        if not (i & 0x80):
            break
        if shift > 63:
            raise ValueError("varint longer than 64 bits")
    return result
