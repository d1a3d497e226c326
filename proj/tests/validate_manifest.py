import json
import sys

import jsonschema

schema_path, manifest_path = sys.argv[1], sys.argv[2]
with open(schema_path) as f:
    schema = json.load(f)
with open(manifest_path) as f:
    manifest = json.load(f)
jsonschema.Draft202012Validator.check_schema(schema)
jsonschema.validate(manifest, schema, cls=jsonschema.Draft202012Validator)
print("valid:", manifest_path)
