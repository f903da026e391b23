"""
Вспомогательные модули.

Модули:
- errors: иерархия исключений и коды завершения
- report_io: атомарная запись CSV и JSON отчетов
"""
