# Grid fields, output writers and parallel helpers
