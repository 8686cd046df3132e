from django.contrib import admin, messages
from .models import SweepRun, BlerCell, ThroughputPoint, SpsOutcome, BackoffPoint


class ReadOnlyInline(admin.TabularInline):
    extra = 0
    can_delete = False

    def has_add_permission(self, request, obj=None):
        return False

    def has_change_permission(self, request, obj=None):
        return False


class BlerCellInline(ReadOnlyInline):
    model = BlerCell


class ThroughputPointInline(ReadOnlyInline):
    model = ThroughputPoint


class SpsOutcomeInline(ReadOnlyInline):
    model = SpsOutcome


class BackoffPointInline(ReadOnlyInline):
    model = BackoffPoint


class SweepRunAdmin(admin.ModelAdmin):
    list_display = ('id', 'kind', 'scenario', 'master_seed', 'code_version', 'n_results', 'created')
    list_display_links = ['id']
    search_fields = ['scenario']
    list_filter = ('kind', 'scenario')
    date_hierarchy = 'created'
    readonly_fields = ('kind', 'scenario', 'master_seed', 'code_version', 'manifest', 'out_dir', 'created')
    fieldsets = [
        (None, {'fields': ['kind', 'scenario', 'master_seed', 'code_version']}),
        ('Output', {'fields': ['out_dir', 'created']}),
        ('Manifest', {'fields': ['manifest'], 'classes': ['collapse']}),
    ]
    inlines = [BlerCellInline, ThroughputPointInline, SpsOutcomeInline, BackoffPointInline]
    actions = ['delete_results']

    def has_add_permission(self, request):
        return False

    def get_inline_instances(self, request, obj=None):
        if obj is None:
            return []
        return [inline for inline in super().get_inline_instances(request, obj)
                if inline.model is obj.result_model()]

    @admin.display(description='Rows')
    def n_results(self, obj):
        return obj.results().count()

    @admin.action(description='Delete result rows, keep the run')
    def delete_results(self, request, queryset):
        for run in queryset:
            run.results().delete()
        self.message_user(request, f'Result rows of {queryset.count()} run(s) deleted', messages.INFO)


class ResultAdmin(admin.ModelAdmin):
    list_filter = ('run__kind',)
    search_fields = ['run__scenario']

    def has_add_permission(self, request):
        return False


class BlerCellAdmin(ResultAdmin):
    list_display = ('run', 'tx_power_dbm', 'mcs', 'n_samples', 'bler_mean', 'bler_std', 'bler_q99', 'low_confidence')
    list_filter = ('mcs', 'low_confidence')


class ThroughputPointAdmin(ResultAdmin):
    list_display = ('run', 'tx_power_dbm', 'mcs', 'tbs_bits', 'bler_mean', 'throughput_bps')
    list_filter = ('mcs',)


class SpsOutcomeAdmin(ResultAdmin):
    list_display = ('run', 'policy', 'n_vehicles', 'load', 'collision_rate', 'prr')
    list_filter = ('policy',)


class BackoffPointAdmin(ResultAdmin):
    list_display = ('run', 'mcs', 'target_bler', 'crossing_mean_dbm', 'crossing_q99_dbm', 'backoff_db')
    list_filter = ('mcs',)


admin.site.site_header = 'Sidelink lab'
admin.site.site_title = 'Sidelink lab'
admin.site.index_title = 'Stored experiment runs'

admin.site.register(SweepRun, SweepRunAdmin)
admin.site.register(BlerCell, BlerCellAdmin)
admin.site.register(ThroughputPoint, ThroughputPointAdmin)
admin.site.register(SpsOutcome, SpsOutcomeAdmin)
admin.site.register(BackoffPoint, BackoffPointAdmin)
