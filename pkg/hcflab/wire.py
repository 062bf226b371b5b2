"""Protobuf message classes for checkpoint.proto.

The descriptors are assembled at import time from the same field table as
checkpoint.proto, so no protoc step is needed. Keep both in sync.
"""

from google.protobuf import descriptor_pb2, descriptor_pool, message_factory

PACKAGE = "hcflab"
FILENAME = "hcflab/checkpoint.proto"

_F = descriptor_pb2.FieldDescriptorProto
_OPTIONAL = _F.LABEL_OPTIONAL
_REPEATED = _F.LABEL_REPEATED

# message name -> [(field name, number, type, label, message type name)]
MESSAGES = {
    "Array": [
        ("shape", 1, _F.TYPE_UINT32, _REPEATED, None),
        ("real", 2, _F.TYPE_BYTES, _OPTIONAL, None),
        ("imag", 3, _F.TYPE_BYTES, _OPTIONAL, None),
    ],
    "Grid": [
        ("n", 1, _F.TYPE_UINT32, _OPTIONAL, None),
        ("resolution", 2, _F.TYPE_UINT32, _OPTIONAL, None),
        ("periods", 3, _F.TYPE_DOUBLE, _REPEATED, None),
        ("derivative_mode", 4, _F.TYPE_STRING, _OPTIONAL, None),
    ],
    "MonitorState": [
        ("doubling", 1, _F.TYPE_MESSAGE, _OPTIONAL, "Array"),
        ("smp_assertion_mode", 2, _F.TYPE_BOOL, _OPTIONAL, None),
        ("smp_violated_at", 3, _F.TYPE_DOUBLE, _OPTIONAL, None),
        ("held_until", 4, _F.TYPE_DOUBLE, _OPTIONAL, None),
        ("held_broken", 5, _F.TYPE_BOOL, _OPTIONAL, None),
        ("torsion_max", 6, _F.TYPE_DOUBLE, _OPTIONAL, None),
        ("dt_rule_respected", 7, _F.TYPE_BOOL, _OPTIONAL, None),
    ],
    "Checkpoint": [
        ("version", 1, _F.TYPE_UINT32, _OPTIONAL, None),
        ("config_hash", 2, _F.TYPE_STRING, _OPTIONAL, None),
        ("seed", 3, _F.TYPE_UINT64, _OPTIONAL, None),
        ("name", 4, _F.TYPE_STRING, _OPTIONAL, None),
        ("t", 5, _F.TYPE_DOUBLE, _OPTIONAL, None),
        ("step", 6, _F.TYPE_UINT64, _OPTIONAL, None),
        ("k0", 7, _F.TYPE_DOUBLE, _OPTIONAL, None),
        ("grid", 8, _F.TYPE_MESSAGE, _OPTIONAL, "Grid"),
        ("metric", 9, _F.TYPE_MESSAGE, _OPTIONAL, "Array"),
        ("phi", 10, _F.TYPE_MESSAGE, _OPTIONAL, "Array"),
        ("config_yaml", 11, _F.TYPE_STRING, _OPTIONAL, None),
        ("monitors", 12, _F.TYPE_MESSAGE, _OPTIONAL, "MonitorState"),
    ],
}


def _file_proto():
    fproto = descriptor_pb2.FileDescriptorProto(name=FILENAME, package=PACKAGE, syntax="proto3")
    for name, fields in MESSAGES.items():
        mproto = fproto.message_type.add(name=name)
        for fname, number, ftype, label, type_name in fields:
            field = mproto.field.add(name=fname, number=number, type=ftype, label=label)
            if type_name is not None:
                field.type_name = ".{0}.{1}".format(PACKAGE, type_name)
    return fproto


def _message_class(descriptor):
    try:
        return message_factory.GetMessageClass(descriptor)
    except AttributeError:
        # protobuf < 4.21
        return message_factory.MessageFactory().GetPrototype(descriptor)


_pool = descriptor_pool.DescriptorPool()
_pool.AddSerializedFile(_file_proto().SerializeToString())

Array = _message_class(_pool.FindMessageTypeByName(PACKAGE + ".Array"))
Grid = _message_class(_pool.FindMessageTypeByName(PACKAGE + ".Grid"))
MonitorState = _message_class(_pool.FindMessageTypeByName(PACKAGE + ".MonitorState"))
Checkpoint = _message_class(_pool.FindMessageTypeByName(PACKAGE + ".Checkpoint"))
