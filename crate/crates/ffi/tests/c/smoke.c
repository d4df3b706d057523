#include <stdio.h>
#include <string.h>

#include "flowsmith.h"

int main(int argc, char **argv) {
    if (argc != 3) {
        fprintf(stderr, "usage: smoke <registry-dir> <workflow.json>\n");
        return 2;
    }
    FsRegistry *registry = NULL;
    if (fs_registry_open(argv[1], &registry) != FS_STATUS_OK) {
        fprintf(stderr, "registry: %s\n", fs_last_error());
        return 1;
    }
    FILE *f = fopen(argv[2], "rb");
    if (!f) return 1;
    static unsigned char buf[1 << 20];
    size_t len = fread(buf, 1, sizeof buf, f);
    fclose(f);

    FsGraph *graph = NULL;
    if (fs_graph_from_json(buf, len, &graph) != FS_STATUS_OK) {
        fprintf(stderr, "json: %s\n", fs_last_error());
        return 1;
    }
    char *code = NULL;
    if (fs_graph_to_code(registry, graph, &code) != FS_STATUS_OK) return 1;

    FsGraph *back = NULL;
    if (fs_graph_from_code(registry, code, &back) != FS_STATUS_OK) return 1;
    size_t errors = 99;
    FsStatus st = fs_graph_validate(registry, back, &errors, NULL);
    printf("nodes=%zu errors=%zu status=%d\n", fs_graph_node_count(back), errors, (int)st);

    if (fs_graph_from_json((const unsigned char *)"{", 1, &graph) != FS_STATUS_PARSE) return 1;
    printf("last error set: %d\n", fs_last_error() != NULL);

    fs_string_free(code);
    fs_graph_free(back);
    fs_graph_free(graph);
    fs_registry_free(registry);
    return 0;
}
